#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coordfit/linalg.hpp"
#include "coordfit/network.hpp"
#include "coordfit/signals.hpp"

namespace coordfit {

/// S(X) = sum_i sigma_i / sigma_max over the singular values of X.
/// Scale invariant; 1 <= S <= min(rows, cols). Throws on a zero matrix.
double stable_rank(const Eigen::Ref<const Matrix>& x);
inline double stable_rank(const EmbeddingMatrix& e) { return stable_rank(e.matrix); }

/// Point-wise Lipschitz upper bound ||J(f)_x||_F at every column of `points`.
Vector lipschitz_map(const MlpParams& params, const Eigen::Ref<const Matrix>& points);

/// Overlapping square windows over an image grid.
struct PatchSpec {
  GridShape grid;
  int window = 8;
  int stride = 4;
};

/// Mean over windows of (max ||phi|| - min ||phi||) / max ||phi|| for a
/// per-pixel norm map in row-major grid order. Windows with max 0 count as 0.
double norm_deviation_from_norms(const Eigen::Ref<const Vector>& norms, const PatchSpec& patches);

/// norm_deviation_from_norms averaged over every hidden layer of the network.
/// `points` must enumerate patches.grid row-major.
double norm_deviation(const MlpParams& params, const Eigen::Ref<const Matrix>& points, const PatchSpec& patches);

struct AngleStats {
  double mean = 0.0;
  double max = 0.0;
  double min = 0.0;
  std::size_t pairs = 0;
  std::size_t excluded_columns = 0;  // zero columns, which have no direction
};

/// Pairwise angles between the nonzero columns of `x`. All pairs are used
/// when there are at most `sample_pairs` of them, otherwise that many pairs
/// are drawn with the given seed.
AngleStats angle_spread(const Eigen::Ref<const Matrix>& x, std::size_t sample_pairs = 10000, std::uint64_t seed = 0);

struct OracleResult {
  double train_mse = 0.0;
  double test_pred_norm = 0.0;  // mean ||prediction|| over the test coordinates
  double target_rms = 0.0;
  Matrix head;                  // q x N final linear layer
};

/// Memorization with near one-hot RBF features: phi(x)_i = exp(-(x - x_i)^2 / sigma^2),
/// one feature per training point, and a least-squares head.
OracleResult memorization_oracle(const Eigen::Ref<const Vector>& train_coords, const Eigen::Ref<const Matrix>& train_targets,
                                 const Eigen::Ref<const Vector>& test_coords, double sigma);

struct DiagnosticsConfig {
  std::size_t max_points = 4096;
  std::size_t angle_pairs = 10000;
  std::uint64_t seed = 0;
  int patch_window = 8;
  int patch_stride = 4;
};

struct LipschitzSummary {
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;
  double max = 0.0;
};

struct DiagnosticsReport {
  std::vector<double> stable_ranks;  // hidden layers 1..k-1
  Vector lipschitz_map;
  LipschitzSummary lipschitz;
  std::optional<double> norm_deviation;  // needs the full image grid
  AngleStats angles;                     // penultimate embedding
  std::size_t points = 0;
};

/// All metrics on one shared point sample: the whole dataset when it has at
/// most max_points samples, else a seeded subsample (norm deviation skipped).
DiagnosticsReport run_diagnostics(const MlpParams& params, const Dataset& data, const DiagnosticsConfig& cfg = {});

std::string report_to_json(const DiagnosticsReport& report, bool include_map = false);

/// Per-pixel heat image normalized by the maximum value.
ImageBuffer heat_map(const Eigen::Ref<const Vector>& values, GridShape grid);

/// Linear-interpolated percentile, q in [0, 100].
double percentile(std::vector<double> values, double q);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace coordfit
