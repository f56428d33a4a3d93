#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coordfit/network.hpp"
#include "coordfit/signals.hpp"

namespace coordfit {

struct LossResult {
  double loss = 0.0;
  Matrix grad;  // dL/dpred
};

/// Mean squared error over every entry, with gradient 2 (pred - target) / count.
LossResult mse_loss(const Eigen::Ref<const Matrix>& pred, const Eigen::Ref<const Matrix>& target);

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(peak^2 / mse), capped at 100 dB.
double psnr(double mse, double peak = 1.0);

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
/// dynamic range 1. Windows are restricted to the valid region; images
/// smaller than the window use a window shrunk to fit. Channels are averaged.
double ssim(const ImageBuffer& a, const ImageBuffer& b);

enum class OptimizerKind { Adam, Sgd };

std::string_view optimizer_name(OptimizerKind kind);
std::optional<OptimizerKind> optimizer_from_name(std::string_view name);

struct TrainConfig {
  int epochs = 2000;
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 0;  // 0 = full batch
  int log_every = 1;
  int diag_every = 0;  // 0 = no stable-rank capture
  bool track_ssim = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamState {
  Gradients m;
  Gradients v;
  long step = 0;

  static AdamState for_params(const MlpParams& params);
};

/// Bias-corrected Adam update, in place.
void adam_step(MlpParams& params, const Gradients& grads, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

void sgd_step(MlpParams& params, const Gradients& grads, double lr);

/// State after `epoch` completed updates (epoch 0 is the initialization).
struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_psnr = 0.0;
  std::optional<double> test_psnr;
  std::optional<double> ssim;
  std::vector<double> stable_ranks;  // empty when not captured at this epoch
};

struct TrainHistory {
  std::size_t hidden_layers = 0;
  std::vector<EpochRecord> records;

  const EpochRecord& final_record() const { return records.back(); }
  /// Record for the given epoch; throws when it was not logged.
  const EpochRecord& at_epoch(int epoch) const;

  /// `epoch,loss,psnr,test_psnr,ssim,srank_l1..srank_lk`, empty fields for
  /// disabled metrics, shortest round-trip number formatting.
  void write_csv(std::ostream& out) const;
  std::string to_csv() const;
};

struct TrainResult {
  MlpParams params;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Runs cfg.epochs optimizer steps. Records epoch 0, every log_every-th
/// epoch and the final epoch. Throws NonFinite, naming the epoch and the
/// first layer with a non-finite value, if the forward pass blows up.
TrainResult train(MlpParams params, const Dataset& data, const TrainConfig& cfg, const Dataset* test = nullptr,
                  const EpochCallback& on_record = {});

}  // namespace coordfit
