#include "tdflow/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#ifndef TDFLOW_VERSION
#define TDFLOW_VERSION "0.0.0"
#endif

namespace tdflow {

std::string content_hash(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string code_version() { return TDFLOW_VERSION; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["code_version"] = code_version;
  j["seed"] = seed;
  j["started"] = started;
  j["finished"] = finished.empty() ? nlohmann::json() : nlohmann::json(finished);
  j["status"] = status;
  j["artifacts"] = artifacts;
  return j.dump(2) + "\n";
}

void RunManifest::write(const std::filesystem::path& path) const { write_text_atomic(path, to_json()); }

std::filesystem::path create_run_dir(const std::filesystem::path& root, const std::string& run_id) {
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw IoError("cannot create output root " + root.string() + ": " + ec.message());
  for (int k = 1;; ++k) {
    auto dir = root / (k == 1 ? run_id : run_id + "-" + std::to_string(k));
    // create_directory returns false when it already exists, so a previous run is never reused.
    if (std::filesystem::create_directory(dir, ec)) return dir;
    if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  }
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path, int every) {
  std::ostringstream out;
  out.precision(10);
  out << "step,loss,one_step_loss,bootstrap_loss,grad_norm,wall_ms\n";
  for (const auto& r : rows) {
    if (every > 1 && r.step % every != 0 && r.step != rows.back().step) continue;
    out << r.step << ',' << r.loss << ',' << r.one_step_loss << ',' << r.bootstrap_loss << ',' << r.grad_norm << ','
        << r.wall_ms << '\n';
  }
  write_text_atomic(path, out.str());
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  require(it != header.end(), "csv: no column named " + name);
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double to_number(const std::string& cell) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    return used == cell.size() ? v : std::numeric_limits<double>::quiet_NaN();
  } catch (const std::exception&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
                                    "#7f7f7f"};

struct Series {
  std::string name;
  std::vector<std::pair<std::string, double>> points;  // raw x label, y
};

struct Frame {
  double width = 640.0;
  double height = 400.0;
  double left = 70.0;
  double right = 150.0;
  double top = 40.0;
  double bottom = 50.0;
  double x0() const { return left; }
  double x1() const { return width - right; }
  double y0() const { return height - bottom; }
  double y1() const { return top; }
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

void y_axis(std::ostringstream& svg, const Frame& f, double lo, double hi) {
  svg << "<line x1=\"" << f.x0() << "\" y1=\"" << f.y0() << "\" x2=\"" << f.x0() << "\" y2=\"" << f.y1()
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    const double y = f.y0() - (f.y0() - f.y1()) * k / 4.0;
    svg << "<text x=\"" << f.x0() - 6 << "\" y=\"" << y + 4 << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(v)
        << "</text>\n";
  }
}

void legend(std::ostringstream& svg, const Frame& f, const std::vector<Series>& series) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = f.y1() + 14.0 * static_cast<double>(i);
    svg << "<rect x=\"" << f.x1() + 12 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\""
        << kPalette[i % std::size(kPalette)] << "\"/>\n"
        << "<text x=\"" << f.x1() + 26 << "\" y=\"" << y + 9 << "\" font-size=\"11\">" << escape_xml(series[i].name)
        << "</text>\n";
  }
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + " is empty");
  t.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size()) throw IoError(path.string() + ": ragged row");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

std::string render_svg(const CsvTable& table, const PlotSection& spec) {
  require(!spec.y.empty(), "plot: no y columns");
  require(spec.kind == "line" || spec.kind == "bar", "plot: kind must be line or bar");
  const auto xi = table.column(spec.x);
  std::vector<std::size_t> yi;
  for (const auto& y : spec.y) yi.push_back(table.column(y));
  const std::optional<std::size_t> gi =
      spec.group.empty() ? std::nullopt : std::optional<std::size_t>(table.column(spec.group));

  std::vector<Series> series;
  auto series_for = [&](const std::string& name) -> Series& {
    for (auto& s : series) {
      if (s.name == name) return s;
    }
    series.push_back({name, {}});
    return series.back();
  };
  for (const auto& row : table.rows) {
    for (std::size_t k = 0; k < yi.size(); ++k) {
      std::string name = spec.y[k];
      if (gi) name = spec.y.size() == 1 ? row[*gi] : row[*gi] + ":" + spec.y[k];
      series_for(name).points.emplace_back(row[xi], to_number(row[yi[k]]));
    }
  }

  double ylo = std::numeric_limits<double>::infinity();
  double yhi = -ylo;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(y)) continue;
      ylo = std::min(ylo, y);
      yhi = std::max(yhi, y);
    }
  }
  if (!std::isfinite(ylo)) {
    ylo = 0.0;
    yhi = 1.0;
  }
  if (spec.kind == "bar") ylo = std::min(ylo, 0.0);
  if (yhi - ylo < 1e-12) yhi = ylo + 1.0;

  const Frame f;
  auto ypix = [&](double y) { return f.y0() - (y - ylo) / (yhi - ylo) * (f.y0() - f.y1()); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
      << "\" viewBox=\"0 0 " << f.width << ' ' << f.height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << f.width / 2 << "\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">"
      << escape_xml(spec.title) << "</text>\n"
      << "<line x1=\"" << f.x0() << "\" y1=\"" << f.y0() << "\" x2=\"" << f.x1() << "\" y2=\"" << f.y0()
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << (f.x0() + f.x1()) / 2 << "\" y=\"" << f.height - 10
      << "\" font-size=\"12\" text-anchor=\"middle\">" << escape_xml(spec.x) << "</text>\n";
  y_axis(svg, f, ylo, yhi);

  if (spec.kind == "line") {
    auto xval = [&](const std::string& cell) {
      const double v = to_number(cell);
      return spec.log_x ? std::log10(v) : v;
    };
    double xlo = std::numeric_limits<double>::infinity();
    double xhi = -xlo;
    for (const auto& s : series) {
      for (const auto& p : s.points) {
        const double x = xval(p.first);
        if (!std::isfinite(x)) continue;
        xlo = std::min(xlo, x);
        xhi = std::max(xhi, x);
      }
    }
    require(std::isfinite(xlo), "plot: column " + spec.x + " has no numeric values");
    if (xhi - xlo < 1e-12) xhi = xlo + 1.0;
    auto xpix = [&](double x) { return f.x0() + (x - xlo) / (xhi - xlo) * (f.x1() - f.x0()); };
    for (int k = 0; k <= 4; ++k) {
      const double x = xlo + (xhi - xlo) * k / 4.0;
      svg << "<text x=\"" << xpix(x) << "\" y=\"" << f.y0() + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
          << fmt(spec.log_x ? std::pow(10.0, x) : x) << "</text>\n";
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
      auto pts = series[i].points;
      std::stable_sort(pts.begin(), pts.end(),
                       [&](const auto& a, const auto& b) { return xval(a.first) < xval(b.first); });
      svg << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << kPalette[i % std::size(kPalette)]
          << "\" points=\"";
      bool first = true;
      for (const auto& [xs, y] : pts) {
        const double x = xval(xs);
        if (!std::isfinite(x) || !std::isfinite(y)) continue;
        svg << (first ? "" : " ") << xpix(x) << ',' << ypix(y);
        first = false;
      }
      svg << "\"/>\n";
    }
  } else {
    std::vector<std::string> categories;
    for (const auto& s : series) {
      for (const auto& p : s.points) {
        if (std::find(categories.begin(), categories.end(), p.first) == categories.end()) {
          categories.push_back(p.first);
        }
      }
    }
    const double slot = (f.x1() - f.x0()) / static_cast<double>(categories.size());
    const double bar = 0.8 * slot / static_cast<double>(series.size());
    for (std::size_t c = 0; c < categories.size(); ++c) {
      const double cx = f.x0() + slot * (static_cast<double>(c) + 0.5);
      svg << "<text x=\"" << cx << "\" y=\"" << f.y0() + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
          << escape_xml(categories[c]) << "</text>\n";
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
      for (const auto& [xs, y] : series[i].points) {
        if (!std::isfinite(y)) continue;
        const auto c = static_cast<double>(std::find(categories.begin(), categories.end(), xs) - categories.begin());
        const double x = f.x0() + slot * (c + 0.1) + bar * static_cast<double>(i);
        const double top = std::min(ypix(y), ypix(0.0));
        svg << "<rect class=\"bar\" x=\"" << x << "\" y=\"" << top << "\" width=\"" << bar << "\" height=\""
            << std::abs(ypix(y) - ypix(0.0)) << "\" fill=\"" << kPalette[i % std::size(kPalette)] << "\"/>\n";
      }
    }
  }
  legend(svg, f, series);
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace tdflow
