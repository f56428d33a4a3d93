#include "coordfit/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "coordfit/diagnostics.hpp"
#include "coordfit/error.hpp"

namespace coordfit {

LossResult mse_loss(const Eigen::Ref<const Matrix>& pred, const Eigen::Ref<const Matrix>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "mse_loss pred " + shape_string(pred.rows(), pred.cols()) +
                                                  " target " + shape_string(target.rows(), target.cols()));
  }
  const double count = static_cast<double>(pred.size());
  LossResult r;
  r.grad = pred - target;
  r.loss = r.grad.squaredNorm() / count;
  r.grad *= 2.0 / count;
  return r;
}

double psnr(double mse, double peak) {
  if (!(mse >= 0.0) || !(peak > 0.0)) throw Error(ErrorKind::InvalidArgument, "psnr needs mse >= 0 and peak > 0");
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  a.validate();
  b.validate();
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw Error(ErrorKind::DimensionMismatch, "ssim image dims differ");
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  int size = 11;
  while (size > 1 && (size > a.height || size > a.width)) size -= 2;
  const int half = size / 2;
  std::vector<double> kernel(static_cast<std::size_t>(size) * size);
  double ksum = 0.0;
  for (int dy = -half; dy <= half; ++dy) {
    for (int dx = -half; dx <= half; ++dx) {
      const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
      kernel[static_cast<std::size_t>((dy + half) * size + dx + half)] = w;
      ksum += w;
    }
  }
  for (double& w : kernel) w /= ksum;

  double total = 0.0;
  std::size_t windows = 0;
  for (int c = 0; c < a.channels; ++c) {
    for (int y = half; y + half < a.height; ++y) {
      for (int x = half; x + half < a.width; ++x) {
        double mu_a = 0.0, mu_b = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
        for (int dy = -half; dy <= half; ++dy) {
          for (int dx = -half; dx <= half; ++dx) {
            const double w = kernel[static_cast<std::size_t>((dy + half) * size + dx + half)];
            const double va = a.at(y + dy, x + dx, c);
            const double vb = b.at(y + dy, x + dx, c);
            mu_a += w * va;
            mu_b += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        }
        const double var_a = saa - mu_a * mu_a;
        const double var_b = sbb - mu_b * mu_b;
        const double cov = sab - mu_a * mu_b;
        total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                 ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        ++windows;
      }
    }
  }
  return total / static_cast<double>(windows);
}

std::string_view optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

std::optional<OptimizerKind> optimizer_from_name(std::string_view name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorKind::InvalidArgument, "epochs must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw Error(ErrorKind::InvalidArgument, "lr must be > 0");
  if (batch_size < 0) throw Error(ErrorKind::InvalidArgument, "batch size must be >= 0");
  if (log_every < 1) throw Error(ErrorKind::InvalidArgument, "log_every must be >= 1");
  if (diag_every < 0) throw Error(ErrorKind::InvalidArgument, "diag_every must be >= 0");
}

AdamState AdamState::for_params(const MlpParams& params) {
  return {Gradients::zeros_like(params), Gradients::zeros_like(params), 0};
}

void adam_step(MlpParams& params, const Gradients& grads, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  if (grads.layers.size() != params.layers.size() || state.m.layers.size() != params.layers.size()) {
    throw Error(ErrorKind::DimensionMismatch, "adam_step layer count");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weight, grads.layers[l].weight, state.m.layers[l].weight, state.v.layers[l].weight);
    update(params.layers[l].bias, grads.layers[l].bias, state.m.layers[l].bias, state.v.layers[l].bias);
  }
}

void sgd_step(MlpParams& params, const Gradients& grads, double lr) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    params.layers[l].weight -= lr * grads.layers[l].weight;
    params.layers[l].bias -= lr * grads.layers[l].bias;
  }
}

const EpochRecord& TrainHistory::at_epoch(int epoch) const {
  for (const auto& r : records) {
    if (r.epoch == epoch) return r;
  }
  throw Error(ErrorKind::InvalidArgument, "epoch " + std::to_string(epoch) + " was not recorded");
}

namespace {

void put_number(std::ostream& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, ptr - buf);
}

void put_optional(std::ostream& out, const std::optional<double>& v) {
  out << ',';
  if (v) put_number(out, *v);
}

// First layer (1-based, 0 = input) holding a non-finite value.
std::size_t first_non_finite_layer(const ForwardCache& cache) {
  for (std::size_t l = 0; l < cache.pre.size(); ++l) {
    if (!cache.pre[l].allFinite()) return l + 1;
    if (l + 1 < cache.activations.size() && !cache.activations[l + 1].allFinite()) return l + 1;
  }
  return 0;
}

}  // namespace

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,loss,psnr,test_psnr,ssim";
  for (std::size_t l = 1; l <= hidden_layers; ++l) out << ",srank_l" << l;
  out << '\n';
  for (const auto& r : records) {
    out << r.epoch << ',';
    put_number(out, r.train_loss);
    out << ',';
    put_number(out, r.train_psnr);
    put_optional(out, r.test_psnr);
    put_optional(out, r.ssim);
    for (std::size_t l = 0; l < hidden_layers; ++l) {
      out << ',';
      if (l < r.stable_ranks.size()) put_number(out, r.stable_ranks[l]);
    }
    out << '\n';
  }
}

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  write_csv(os);
  return os.str();
}

TrainResult train(MlpParams params, const Dataset& data, const TrainConfig& cfg, const Dataset* test,
                  const EpochCallback& on_record) {
  cfg.validate();
  params.validate();
  data.validate();
  if (data.size() < 1) throw Error(ErrorKind::InvalidArgument, "training set is empty");
  if (data.coords.rows() != params.input_dim() || data.targets.rows() != params.output_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "dataset dims do not match the network");
  }

  const ScopedFlushDenormals ftz;
  TrainResult result;
  result.history.hidden_layers = params.depth() - 1;
  AdamState adam = AdamState::for_params(params);
  ForwardCache cache;
  const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= data.size();

  auto should_log = [&](int epoch) { return epoch == 0 || epoch == cfg.epochs || epoch % cfg.log_every == 0; };

  // Evaluates the current parameters on the whole training set, leaving the
  // forward cache populated. Returns the loss gradient.
  auto evaluate = [&](int epoch, EpochRecord& rec) -> Matrix {
    const Matrix pred = forward(params, data.coords, &cache);
    LossResult loss = mse_loss(pred, data.targets);
    if (!std::isfinite(loss.loss)) {
      const std::size_t layer = first_non_finite_layer(cache);
      throw Error(ErrorKind::NonFinite, "epoch " + std::to_string(epoch) + ": non-finite values first seen in layer " +
                                            std::to_string(layer == 0 ? params.depth() : layer));
    }
    rec.epoch = epoch;
    rec.train_loss = loss.loss;
    rec.train_psnr = psnr(loss.loss, data.peak);
    if (should_log(epoch)) {
      if (test) rec.test_psnr = psnr(mse_loss(predict(params, test->coords), test->targets).loss, test->peak);
      if (cfg.track_ssim && data.grid) {
        rec.ssim = ssim(image_from_columns(data.targets, *data.grid), image_from_columns(pred, *data.grid));
      }
      if (cfg.diag_every > 0 && epoch % cfg.diag_every == 0) {
        for (std::size_t l = 1; l < params.depth(); ++l) {
          const auto& h = cache.activations[l];
          rec.stable_ranks.push_back(h.matrix().squaredNorm() > 0.0 ? stable_rank(h.matrix()) : 0.0);
        }
      }
    }
    return std::move(loss.grad);
  };

  auto step = [&](const Gradients& grads) {
    if (cfg.optimizer == OptimizerKind::Adam) {
      adam_step(params, grads, adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    } else {
      sgd_step(params, grads, cfg.lr);
    }
  };

  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (int epoch = 0;; ++epoch) {
    EpochRecord rec;
    const Matrix grad = evaluate(epoch, rec);
    if (should_log(epoch)) {
      result.history.records.push_back(rec);
      if (on_record) on_record(rec);
    }
    if (epoch == cfg.epochs) break;

    if (full_batch) {
      step(backward(params, cache, grad).grads);
      continue;
    }
    Rng rng(cfg.seed, 0x62617463680000ULL + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Matrix coords = data.coords(Eigen::all, idx);
      const Matrix targets = data.targets(Eigen::all, idx);
      ForwardCache batch_cache;
      const Matrix pred = forward(params, coords, &batch_cache);
      step(backward(params, batch_cache, mse_loss(pred, targets).grad).grads);
    }
  }
  result.params = std::move(params);
  return result;
}

}  // namespace coordfit
