#include "coordfit/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "coordfit/error.hpp"

namespace coordfit {

double stable_rank(const Eigen::Ref<const Matrix>& x) {
  const Vector s = svd(x, false).singular_values;
  if (!(s(0) > 0.0)) throw Error(ErrorKind::InvalidArgument, "stable rank of a zero matrix");
  return s.sum() / s(0);
}

Vector lipschitz_map(const MlpParams& params, const Eigen::Ref<const Matrix>& points) {
  return jacobian_frobenius(params, points);
}

double norm_deviation_from_norms(const Eigen::Ref<const Vector>& norms, const PatchSpec& patches) {
  const auto [h, w] = patches.grid;
  if (norms.size() != static_cast<Eigen::Index>(h) * w) {
    throw Error(ErrorKind::DimensionMismatch, "norm map does not match patch grid");
  }
  if (patches.window < 1 || patches.stride < 1) throw Error(ErrorKind::InvalidArgument, "bad patch spec");
  const int wy = std::min(patches.window, h);
  const int wx = std::min(patches.window, w);
  double total = 0.0;
  std::size_t count = 0;
  for (int y0 = 0; y0 + wy <= h; y0 += patches.stride) {
    for (int x0 = 0; x0 + wx <= w; x0 += patches.stride) {
      double lo = norms(static_cast<Eigen::Index>(y0) * w + x0);
      double hi = lo;
      for (int y = y0; y < y0 + wy; ++y) {
        for (int x = x0; x < x0 + wx; ++x) {
          const double v = norms(static_cast<Eigen::Index>(y) * w + x);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
      total += hi > 0.0 ? (hi - lo) / hi : 0.0;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double norm_deviation(const MlpParams& params, const Eigen::Ref<const Matrix>& points, const PatchSpec& patches) {
  const std::size_t hidden = params.depth() - 1;
  if (hidden == 0) throw Error(ErrorKind::InvalidArgument, "norm deviation needs a hidden layer");
  ForwardCache cache;
  forward(params, points, &cache);
  double total = 0.0;
  for (std::size_t l = 1; l <= hidden; ++l) {
    const Vector norms = cache.activations[l].matrix().colwise().norm().transpose();
    total += norm_deviation_from_norms(norms, patches);
  }
  return total / static_cast<double>(hidden);
}

AngleStats angle_spread(const Eigen::Ref<const Matrix>& x, std::size_t sample_pairs, std::uint64_t seed) {
  std::vector<Eigen::Index> live;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (x.col(j).squaredNorm() > 0.0) live.push_back(j);
  }
  AngleStats stats;
  stats.excluded_columns = static_cast<std::size_t>(x.cols()) - live.size();
  if (live.size() < 2) throw Error(ErrorKind::InvalidArgument, "angle spread needs two nonzero columns");

  Matrix unit(x.rows(), static_cast<Eigen::Index>(live.size()));
  for (std::size_t i = 0; i < live.size(); ++i) unit.col(static_cast<Eigen::Index>(i)) = x.col(live[i]).normalized();

  // 2 atan2(|u - v|, |u + v|) stays accurate near 0 and pi, unlike acos.
  auto angle = [&](std::size_t i, std::size_t j) {
    const auto u = unit.col(static_cast<Eigen::Index>(i));
    const auto v = unit.col(static_cast<Eigen::Index>(j));
    return 2.0 * std::atan2((u - v).norm(), (u + v).norm());
  };
  double sum = 0.0;
  stats.min = std::numeric_limits<double>::infinity();
  stats.max = 0.0;
  auto record = [&](double a) {
    sum += a;
    stats.min = std::min(stats.min, a);
    stats.max = std::max(stats.max, a);
    ++stats.pairs;
  };
  const std::size_t n = live.size();
  const double all_pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  if (all_pairs <= static_cast<double>(sample_pairs)) {
    for (std::size_t i = 0; i + 1 < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) record(angle(i, j));
  } else {
    Rng rng(seed, 0x616e676c65ULL);
    for (std::size_t p = 0; p < sample_pairs; ++p) {
      const std::size_t i = rng.below(n);
      std::size_t j = rng.below(n - 1);
      if (j >= i) ++j;
      record(angle(i, j));
    }
  }
  stats.mean = sum / static_cast<double>(stats.pairs);
  return stats;
}

OracleResult memorization_oracle(const Eigen::Ref<const Vector>& train_coords, const Eigen::Ref<const Matrix>& train_targets,
                                 const Eigen::Ref<const Vector>& test_coords, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(ErrorKind::InvalidArgument, "sigma must be > 0");
  const Eigen::Index n = train_coords.size();
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "oracle needs at least one training point");
  if (train_targets.cols() != n) throw Error(ErrorKind::DimensionMismatch, "oracle targets/coords count");
  std::vector<double> sorted(train_coords.data(), train_coords.data() + n);
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorKind::InvalidArgument, "oracle training coordinates must be distinct");
  }

  // Column m of the result is phi(points[m]).
  auto features = [&](const Eigen::Ref<const Vector>& points) {
    Matrix phi(n, points.size());
    for (Eigen::Index m = 0; m < points.size(); ++m) {
      phi.col(m) = (-(points(m) - train_coords.array()).square() / (sigma * sigma)).exp().matrix();
    }
    return phi;
  };
  const Matrix x_train = features(train_coords);  // D x N with D = N
  OracleResult out;
  out.head = pinv_solve(x_train.transpose(), train_targets.transpose()).transpose();
  const Matrix fit = out.head * x_train;
  out.train_mse = (fit - train_targets).squaredNorm() / static_cast<double>(train_targets.size());
  out.target_rms = std::sqrt(train_targets.squaredNorm() / static_cast<double>(train_targets.size()));
  if (test_coords.size() > 0) {
    const Matrix pred = out.head * features(test_coords);
    out.test_pred_norm = pred.colwise().norm().mean();
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::InvalidArgument, "percentile of empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error(ErrorKind::InvalidArgument, "spearman needs paired samples");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const Eigen::Map<const Eigen::ArrayXd> x(ra.data(), static_cast<Eigen::Index>(ra.size()));
  const Eigen::Map<const Eigen::ArrayXd> y(rb.data(), static_cast<Eigen::Index>(rb.size()));
  const Eigen::ArrayXd dx = x - x.mean();
  const Eigen::ArrayXd dy = y - y.mean();
  const double denom = std::sqrt((dx * dx).sum() * (dy * dy).sum());
  return denom > 0.0 ? (dx * dy).sum() / denom : 0.0;
}

DiagnosticsReport run_diagnostics(const MlpParams& params, const Dataset& data, const DiagnosticsConfig& cfg) {
  data.validate();
  if (params.depth() < 2) throw Error(ErrorKind::InvalidArgument, "diagnostics need at least one hidden layer");
  const ScopedFlushDenormals ftz;
  Matrix points;
  const bool full = static_cast<std::size_t>(data.size()) <= cfg.max_points;
  if (full) {
    points = data.coords;
  } else {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(data.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    Rng rng(cfg.seed, 0x64696167ULL);
    for (std::size_t i = 0; i < cfg.max_points; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    idx.resize(cfg.max_points);
    std::sort(idx.begin(), idx.end());
    points = data.coords(Eigen::all, idx);
  }

  DiagnosticsReport report;
  report.points = static_cast<std::size_t>(points.cols());
  ForwardCache cache;
  forward(params, points, &cache);
  for (std::size_t l = 1; l < params.depth(); ++l) {
    const auto& h = cache.activations[l];
    report.stable_ranks.push_back(h.matrix().squaredNorm() > 0.0 ? stable_rank(h.matrix()) : 0.0);
  }
  report.lipschitz_map = lipschitz_map(params, points);
  std::vector<double> lip(report.lipschitz_map.data(), report.lipschitz_map.data() + report.lipschitz_map.size());
  report.lipschitz = {report.lipschitz_map.mean(), percentile(lip, 50.0), percentile(lip, 95.0),
                      report.lipschitz_map.maxCoeff()};
  if (full && data.grid) {
    report.norm_deviation = norm_deviation(params, points, PatchSpec{*data.grid, cfg.patch_window, cfg.patch_stride});
  }
  const auto& penultimate = cache.activations.back();
  if ((penultimate.matrix().colwise().squaredNorm().array() > 0.0).count() >= 2) {
    report.angles = angle_spread(penultimate.matrix(), cfg.angle_pairs, cfg.seed);
  } else {
    report.angles.excluded_columns = static_cast<std::size_t>(penultimate.cols());
  }
  return report;
}

std::string report_to_json(const DiagnosticsReport& report, bool include_map) {
  nlohmann::json j;
  j["points"] = report.points;
  j["stable_ranks"] = report.stable_ranks;
  j["lipschitz"] = {{"mean", report.lipschitz.mean},
                    {"median", report.lipschitz.median},
                    {"p95", report.lipschitz.p95},
                    {"max", report.lipschitz.max}};
  j["norm_deviation"] = report.norm_deviation ? nlohmann::json(*report.norm_deviation) : nlohmann::json(nullptr);
  j["angles"] = {{"mean", report.angles.mean},
                 {"min", report.angles.min},
                 {"max", report.angles.max},
                 {"pairs", report.angles.pairs},
                 {"excluded_columns", report.angles.excluded_columns}};
  if (include_map) {
    j["lipschitz_map"] =
        std::vector<double>(report.lipschitz_map.data(), report.lipschitz_map.data() + report.lipschitz_map.size());
  }
  return j.dump(2);
}

ImageBuffer heat_map(const Eigen::Ref<const Vector>& values, GridShape grid) {
  const double top = values.size() > 0 ? values.maxCoeff() : 0.0;
  const Vector scaled = top > 0.0 ? Vector(values / top) : Vector(Vector::Zero(values.size()));
  return image_from_columns(scaled.transpose(), grid);
}

}  // namespace coordfit
