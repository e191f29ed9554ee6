#include "tdflow/commands.hpp"
#include "tdflow/config.hpp"
#include "tdflow/oracle.hpp"
#include "tdflow/report.hpp"
#include "tdflow/transport.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace tdflow;

namespace {

TabularMDP make_mdp(const Mat& transition, int n_actions) {
  require(n_actions > 0 && transition.rows() % n_actions == 0,
          "transition must have n_states * n_actions rows");
  TabularMDP mdp;
  mdp.n_actions = n_actions;
  mdp.n_states = static_cast<int>(transition.rows() / n_actions);
  mdp.transition = transition;
  mdp.validate();
  return mdp;
}

TabularPolicy make_policy(const Mat& probs, const TabularMDP& mdp) {
  TabularPolicy pi{probs};
  pi.validate(mdp.n_states, mdp.n_actions);
  return pi;
}

}  // namespace

PYBIND11_MODULE(_tdflow, m) {
  m.doc() = "Successor-measure oracles, optimal-transport distances and the tdflow command runner.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("version", &code_version);

  m.def(
      "successor_measure",
      [](const Mat& transition, const Mat& policy, double gamma) {
        const auto mdp = make_mdp(transition, static_cast<int>(policy.cols()));
        return successor_measure_exact(mdp, make_policy(policy, mdp), gamma).values;
      },
      py::arg("transition"), py::arg("policy"), py::arg("gamma"),
      "Exact successor measure; rows are (state, action) pairs in state-major order.");

  m.def(
      "bellman_apply",
      [](const Mat& measure, const Mat& transition, const Mat& policy, double gamma) {
        const auto mdp = make_mdp(transition, static_cast<int>(policy.cols()));
        TabularMeasureField field{mdp.n_states, mdp.n_actions, measure};
        field.validate();
        return bellman_apply(field, mdp, make_policy(policy, mdp), gamma).values;
      },
      py::arg("measure"), py::arg("transition"), py::arg("policy"), py::arg("gamma"));

  m.def(
      "value",
      [](const Mat& transition, const Mat& policy, const Vec& reward, double gamma) {
        const auto mdp = make_mdp(transition, static_cast<int>(policy.cols()));
        return value_exact(mdp, make_policy(policy, mdp), reward, gamma);
      },
      py::arg("transition"), py::arg("policy"), py::arg("reward"), py::arg("gamma"),
      "Q values as an n_states x n_actions array.");

  m.def(
      "emd", [](const Mat& a, const Mat& b) { return emd_exact(a, b); }, py::arg("a"), py::arg("b"),
      "Exact 1-Wasserstein distance between two uniformly weighted point sets.");

  m.def(
      "validate_config", [](const std::string& text) { parse_run_config(text); }, py::arg("text"),
      "Raises ConfigError naming the offending field.");

  m.def(
      "run",
      [](const std::string& command, const std::filesystem::path& config, std::optional<std::uint64_t> seed,
         std::optional<std::filesystem::path> out, std::optional<int> steps,
         std::optional<std::filesystem::path> checkpoint, std::optional<std::filesystem::path> input) {
        CommandOptions o;
        o.command = command;
        o.config = config;
        o.seed = seed;
        o.out = std::move(out);
        o.steps = steps;
        o.checkpoint = std::move(checkpoint);
        o.input = std::move(input);
        py::gil_scoped_release release;
        return run_command(o);
      },
      py::arg("command"), py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none(),
      py::arg("steps") = py::none(), py::arg("checkpoint") = py::none(), py::arg("input") = py::none(),
      "Runs one CLI command and returns its run directory.");

  m.def("commands", &command_names);
}
