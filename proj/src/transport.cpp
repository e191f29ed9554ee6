#include "tdflow/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tdflow {

std::vector<int> hungarian(const Mat& cost) {
  const auto n = static_cast<int>(cost.rows());
  const auto m = static_cast<int>(cost.cols());
  require(n >= 1 && n <= m, "hungarian: need 1 <= rows <= cols");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Potentials u (rows) and v (cols), 1-based with column 0 as the virtual start.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> match(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) {
          continue;
        }
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (match[j] != 0) {
      assignment[match[j] - 1] = j - 1;
    }
  }
  return assignment;
}

TransportPlan transport_lp(const Mat& cost, const Vec& supply, const Vec& demand) {
  const auto n = static_cast<int>(cost.rows());
  const auto m = static_cast<int>(cost.cols());
  require(supply.size() == n && demand.size() == m, "transport_lp: weight sizes do not match cost matrix");
  require((supply.array() >= 0.0).all() && (demand.array() >= 0.0).all(), "transport_lp: negative mass");
  const double total = supply.sum();
  require(total > 0.0 && std::abs(total - demand.sum()) <= 1e-9 * total, "transport_lp: unbalanced masses");
  require((cost.array() >= 0.0).all(), "transport_lp: costs must be non-negative");

  const double tol = 1e-14 * total;
  Vec rem_s = supply;
  Vec rem_d = demand * (total / demand.sum());
  Mat flow = Mat::Zero(n, m);

  // Nodes: 0 = super source, 1..n sources, n+1..n+m sinks, n+m+1 = super sink.
  const int nv = n + m + 2;
  const int sink = nv - 1;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> pot(nv, 0.0), dist(nv);
  std::vector<int> prev(nv);
  std::vector<char> done(nv);

  auto remaining = [&] { return rem_s.sum(); };
  while (remaining() > tol) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(prev.begin(), prev.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    dist[0] = 0.0;
    for (;;) {
      int u = -1;
      for (int k = 0; k < nv; ++k) {
        if (!done[k] && dist[k] < kInf && (u < 0 || dist[k] < dist[u])) {
          u = k;
        }
      }
      if (u < 0) {
        break;
      }
      done[u] = 1;
      if (u == sink) {
        continue;
      }
      auto relax = [&](int w, double c) {
        if (done[w]) {
          return;
        }
        const double nd = dist[u] + c + pot[u] - pot[w];
        if (nd < dist[w]) {
          dist[w] = nd;
          prev[w] = u;
        }
      };
      if (u == 0) {
        for (int i = 0; i < n; ++i) {
          if (rem_s[i] > tol) {
            relax(1 + i, 0.0);
          }
        }
      } else if (u <= n) {
        const int i = u - 1;
        for (int j = 0; j < m; ++j) {
          relax(1 + n + j, cost(i, j));
        }
      } else {
        const int j = u - 1 - n;
        for (int i = 0; i < n; ++i) {
          if (flow(i, j) > tol) {
            relax(1 + i, -cost(i, j));
          }
        }
        if (rem_d[j] > tol) {
          relax(sink, 0.0);
        }
      }
    }
    if (dist[sink] == kInf) {
      throw NumericError("transport_lp: no augmenting path (numerical breakdown)");
    }
    for (int k = 0; k < nv; ++k) {
      if (dist[k] < kInf) {
        pot[k] += dist[k];
      }
    }
    // Bottleneck along the path sink <- j <- i <- ... <- source.
    double amount = kInf;
    for (int w = sink; w != 0; w = prev[w]) {
      const int u = prev[w];
      if (w == sink) {
        amount = std::min(amount, rem_d[u - 1 - n]);
      } else if (u == 0) {
        amount = std::min(amount, rem_s[w - 1]);
      } else if (u > n) {
        amount = std::min(amount, flow(w - 1, u - 1 - n));
      }
    }
    for (int w = sink; w != 0; w = prev[w]) {
      const int u = prev[w];
      if (w == sink) {
        rem_d[u - 1 - n] -= amount;
      } else if (u == 0) {
        rem_s[w - 1] -= amount;
      } else if (u <= n) {
        flow(u - 1, w - 1 - n) += amount;
      } else {
        flow(w - 1, u - 1 - n) -= amount;
      }
    }
  }
  TransportPlan plan;
  plan.cost = (flow.array() * cost.array()).sum();
  plan.flow = std::move(flow);
  return plan;
}

Mat euclidean_cost(const Mat& a, const Mat& b) {
  require(a.cols() == b.cols(), "euclidean_cost: dimension mismatch");
  Mat c(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      c(i, j) = (a.row(i) - b.row(j)).norm();
    }
  }
  return c;
}

double emd_exact(const Mat& a, const Mat& b, const Vec& wa, const Vec& wb) {
  require(a.rows() >= 1 && b.rows() >= 1, "emd: point sets must be non-empty");
  require(a.cols() == b.cols(), "emd: dimension mismatch");
  const Mat cost = euclidean_cost(a, b);
  if (wa.size() == 0 && wb.size() == 0 && a.rows() == b.rows()) {
    const auto match = hungarian(cost);
    double total = 0.0;
    for (std::size_t i = 0; i < match.size(); ++i) {
      total += cost(static_cast<Eigen::Index>(i), match[i]);
    }
    return total / static_cast<double>(a.rows());
  }
  const Vec pa = wa.size() == 0 ? Vec(Vec::Constant(a.rows(), 1.0 / static_cast<double>(a.rows()))) : wa;
  const Vec pb = wb.size() == 0 ? Vec(Vec::Constant(b.rows(), 1.0 / static_cast<double>(b.rows()))) : wb;
  require(pa.size() == a.rows() && pb.size() == b.rows(), "emd: weight count does not match point count");
  require(std::abs(pa.sum() - 1.0) <= 1e-9 && std::abs(pb.sum() - 1.0) <= 1e-9, "emd: weights must sum to 1");
  return transport_lp(cost, pa, pb).cost;
}

double wasserstein_tabular(const Vec& p, const Vec& q, const Mat& embedding) {
  require(p.size() == embedding.rows() && q.size() == embedding.rows(), "wasserstein_tabular: size mismatch");
  // Mass common to both sides stays put; only the difference is transported.
  const Vec common = p.cwiseMin(q);
  const Vec surplus = (p - common).cwiseMax(0.0);
  const Vec deficit = (q - common).cwiseMax(0.0);
  const double mass = surplus.sum();
  if (mass <= 1e-15) {
    return 0.0;
  }
  std::vector<Eigen::Index> src, dst;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (surplus[i] > 0.0) {
      src.push_back(i);
    }
    if (deficit[i] > 0.0) {
      dst.push_back(i);
    }
  }
  Mat cost(static_cast<Eigen::Index>(src.size()), static_cast<Eigen::Index>(dst.size()));
  Vec sup(cost.rows()), dem(cost.cols());
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    sup[i] = surplus[src[static_cast<std::size_t>(i)]];
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
      cost(i, j) = (embedding.row(src[static_cast<std::size_t>(i)]) - embedding.row(dst[static_cast<std::size_t>(j)])).norm();
    }
  }
  for (Eigen::Index j = 0; j < cost.cols(); ++j) {
    dem[j] = deficit[dst[static_cast<std::size_t>(j)]];
  }
  // p and q are each normalized only up to round-off.
  dem *= mass / dem.sum();
  return transport_lp(cost, sup, dem).cost;
}

namespace {

Mat subsample_rows(const Mat& x, int k, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  // Partial Fisher-Yates with our own uniform draws keeps results platform independent.
  for (int i = 0; i < k; ++i) {
    const auto span = static_cast<Eigen::Index>(idx.size()) - i;
    const auto j = i + std::min(span - 1, static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(span)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  Mat out(k, x.cols());
  for (int i = 0; i < k; ++i) {
    out.row(i) = x.row(idx[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace

double emd_subsampled(const Mat& a, const Mat& b, int subsample, int repeats, Rng& rng) {
  require(subsample >= 1 && repeats >= 1, "emd_subsampled: subsample and repeats must be >= 1");
  if (a.rows() <= subsample && b.rows() <= subsample) {
    return emd_exact(a, b);
  }
  const int ka = static_cast<int>(std::min<Eigen::Index>(a.rows(), subsample));
  const int kb = static_cast<int>(std::min<Eigen::Index>(b.rows(), subsample));
  double total = 0.0;
  for (int r = 0; r < repeats; ++r) {
    total += emd_exact(subsample_rows(a, ka, rng), subsample_rows(b, kb, rng));
  }
  return total / repeats;
}

}  // namespace tdflow
