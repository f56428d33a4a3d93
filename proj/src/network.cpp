#include "coordfit/network.hpp"

#include <cmath>
#include <numbers>

#include "coordfit/error.hpp"

namespace coordfit {

namespace {

constexpr double kSirenDefaultOmega = 30.0;

// Frequency multiplier used by the siren scheme for layer l: the sin
// parameter of the layer's own activation, else of the layer feeding it,
// else the SIREN default omega_0 = 30.
double siren_omega(const std::vector<LayerSpec>& specs, std::size_t l) {
  auto sin_a = [&](std::size_t i) -> std::optional<double> {
    const auto& act = specs[i].activation;
    if (act && act->kind == ActivationKind::Sin) return act->a;
    return std::nullopt;
  };
  if (auto a = sin_a(l)) return *a;
  if (l > 0) {
    if (auto a = sin_a(l - 1)) return *a;
  }
  return kSirenDefaultOmega;
}

void check_batch(const MlpParams& params, const Eigen::Ref<const Matrix>& batch) {
  if (batch.rows() != params.input_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "batch has " + std::to_string(batch.rows()) +
                                                  " rows, network expects " + std::to_string(params.input_dim()));
  }
  if (!batch.allFinite()) throw Error(ErrorKind::NonFinite, "batch contains non-finite coordinates");
}

}  // namespace

std::string_view init_name(InitKind kind) {
  switch (kind) {
    case InitKind::XavierUniform: return "xavier_uniform";
    case InitKind::XavierNormal: return "xavier_normal";
    case InitKind::KaimingUniform: return "kaiming_uniform";
    case InitKind::Siren: return "siren";
  }
  return "unknown";
}

std::optional<InitKind> init_from_name(std::string_view name) {
  for (auto k : {InitKind::XavierUniform, InitKind::XavierNormal, InitKind::KaimingUniform, InitKind::Siren}) {
    if (init_name(k) == name) return k;
  }
  return std::nullopt;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : engine_(splitmix64(seed ^ splitmix64(stream + 1))) {}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  return r * std::cos(theta);
}

std::size_t Rng::below(std::size_t n) {
  // Rejection sampling over the largest multiple of n.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

int MlpParams::input_dim() const {
  if (specs.empty()) return 0;
  if (!pe) return specs.front().in_dim;
  const int per = 2 * pe->num_frequencies + (pe->include_input ? 1 : 0);
  return per == 0 ? 0 : specs.front().in_dim / per;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void MlpParams::validate() const {
  if (specs.empty()) throw Error(ErrorKind::InvalidArgument, "MLP needs at least one layer");
  if (specs.size() != layers.size()) throw Error(ErrorKind::InvalidArgument, "spec/layer count mismatch");
  if (pe) {
    if (pe->num_frequencies < 0) throw Error(ErrorKind::InvalidArgument, "negative PE frequency count");
    const int per = 2 * pe->num_frequencies + (pe->include_input ? 1 : 0);
    if (per == 0 || specs.front().in_dim % per != 0) {
      throw Error(ErrorKind::DimensionMismatch, "first layer in_dim " + std::to_string(specs.front().in_dim) +
                                                    " is not a positional-embedding output size");
    }
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    if (s.in_dim < 1 || s.out_dim < 1) throw Error(ErrorKind::InvalidArgument, "layer dims must be >= 1");
    if (i > 0 && specs[i - 1].out_dim != s.in_dim) {
      throw Error(ErrorKind::DimensionMismatch, "layer " + std::to_string(i) + " in_dim does not chain");
    }
    const bool last = i + 1 == specs.size();
    if (last != s.is_linear()) {
      throw Error(ErrorKind::InvalidArgument, "exactly the last layer must be linear");
    }
    if (s.activation) coordfit::validate(*s.activation);
    const auto& l = layers[i];
    if (l.weight.rows() != s.out_dim || l.weight.cols() != s.in_dim || l.bias.size() != s.out_dim) {
      throw Error(ErrorKind::DimensionMismatch, "layer " + std::to_string(i) + " parameter shape");
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) {
      throw Error(ErrorKind::NonFinite, "layer " + std::to_string(i) + " has non-finite parameters");
    }
  }
}

Gradients Gradients::zeros_like(const MlpParams& params) {
  Gradients g;
  g.layers.reserve(params.layers.size());
  for (const auto& l : params.layers) {
    g.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  return g;
}

std::vector<LayerSpec> make_layer_specs(int in_dim, int width, int hidden_layers, int out_dim,
                                        const ActivationSpec& activation) {
  std::vector<LayerSpec> specs;
  int prev = in_dim;
  for (int i = 0; i < hidden_layers; ++i) {
    specs.push_back({prev, width, activation});
    prev = width;
  }
  specs.push_back({prev, out_dim, std::nullopt});
  return specs;
}

MlpParams init_mlp(const std::vector<LayerSpec>& specs, const InitScheme& scheme,
                   std::optional<PositionalEmbeddingSpec> pe) {
  MlpParams params;
  params.specs = specs;
  params.pe = pe;
  params.layers.reserve(specs.size());
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const auto& s = specs[l];
    if (s.in_dim < 1 || s.out_dim < 1) throw Error(ErrorKind::InvalidArgument, "layer dims must be >= 1");
    Rng rng(scheme.seed, l);
    const double fan_in = s.in_dim;
    const double fan_out = s.out_dim;
    Matrix w(s.out_dim, s.in_dim);
    auto fill_uniform = [&](double bound) {
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
    };
    switch (scheme.kind) {
      case InitKind::XavierUniform: fill_uniform(std::sqrt(6.0 / (fan_in + fan_out))); break;
      case InitKind::XavierNormal: {
        const double stddev = std::sqrt(2.0 / (fan_in + fan_out));
        for (Eigen::Index r = 0; r < w.rows(); ++r)
          for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = stddev * rng.normal();
        break;
      }
      case InitKind::KaimingUniform: fill_uniform(std::sqrt(6.0 / fan_in)); break;
      case InitKind::Siren:
        fill_uniform(l == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / siren_omega(specs, l));
        break;
    }
    params.layers.push_back({std::move(w), Vector::Zero(s.out_dim)});
  }
  params.validate();
  return params;
}

Matrix positional_embed(const Eigen::Ref<const Matrix>& coords, const PositionalEmbeddingSpec& pe) {
  const int per = 2 * pe.num_frequencies + (pe.include_input ? 1 : 0);
  Matrix out(coords.rows() * per, coords.cols());
  for (Eigen::Index d = 0; d < coords.rows(); ++d) {
    Eigen::Index row = d * per;
    if (pe.include_input) out.row(row++) = coords.row(d);
    double freq = std::numbers::pi;
    for (int k = 0; k < pe.num_frequencies; ++k) {
      const Eigen::ArrayXd arg = freq * coords.row(d).transpose().array();
      out.row(row++) = arg.sin().transpose().matrix();
      out.row(row++) = arg.cos().transpose().matrix();
      freq *= pe.base;
    }
  }
  return out;
}

Vector positional_embed(const Vector& x, const PositionalEmbeddingSpec& pe) {
  return positional_embed(Eigen::Ref<const Matrix>(x), pe).col(0);
}

Matrix forward(const MlpParams& params, const Eigen::Ref<const Matrix>& batch, ForwardCache* cache) {
  check_batch(params, batch);
  Eigen::ArrayXXd h = params.pe ? positional_embed(batch, *params.pe).array() : batch.array().eval();
  if (cache) {
    cache->raw_input = batch.array();
    cache->activations.clear();
    cache->pre.clear();
    cache->d1.clear();
  }
  const std::size_t k = params.layers.size();
  for (std::size_t l = 0; l < k; ++l) {
    const auto& layer = params.layers[l];
    Eigen::ArrayXXd z(layer.weight.rows(), h.cols());
    z.matrix().noalias() = layer.weight * h.matrix();
    z.colwise() += layer.bias.array();
    if (cache) cache->activations.push_back(std::move(h));
    if (l + 1 == k) {
      if (cache) cache->pre.push_back(z);
      return z.matrix();
    }
    Eigen::ArrayXXd next;
    if (cache) {
      Eigen::ArrayXXd d1;
      apply_activation(*params.specs[l].activation, z, next, &d1);
      cache->d1.push_back(std::move(d1));
      cache->pre.push_back(std::move(z));
    } else {
      apply_activation(*params.specs[l].activation, z, next, nullptr);
    }
    h = std::move(next);
  }
  return {};
}

BackwardResult backward(const MlpParams& params, const ForwardCache& cache, const Eigen::Ref<const Matrix>& dl_dy,
                        bool weight_grads) {
  const std::size_t k = params.layers.size();
  if (cache.activations.size() != k || cache.d1.size() + 1 != k) {
    throw Error(ErrorKind::DimensionMismatch, "forward cache does not match network depth");
  }
  if (dl_dy.rows() != params.output_dim() || dl_dy.cols() != cache.batch_size()) {
    throw Error(ErrorKind::DimensionMismatch, "dL/dy shape " + shape_string(dl_dy.rows(), dl_dy.cols()));
  }
  BackwardResult out;
  if (weight_grads) out.grads.layers.resize(k);
  Matrix delta = dl_dy;
  for (std::size_t l = k; l-- > 0;) {
    const auto& layer = params.layers[l];
    if (weight_grads) {
      auto& g = out.grads.layers[l];
      g.weight.noalias() = delta * cache.activations[l].matrix().transpose();
      g.bias = delta.rowwise().sum();
    }
    Matrix upstream(layer.weight.cols(), delta.cols());
    upstream.noalias() = layer.weight.transpose() * delta;
    if (l > 0) {
      delta = (upstream.array() * cache.d1[l - 1]).matrix();
    } else {
      delta = std::move(upstream);
    }
  }

  if (!params.pe) {
    out.input_grad = std::move(delta);
    return out;
  }
  // Chain through the Fourier features.
  const auto& pe = *params.pe;
  const int per = 2 * pe.num_frequencies + (pe.include_input ? 1 : 0);
  const auto& x = cache.raw_input;
  out.input_grad = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index d = 0; d < x.rows(); ++d) {
    Eigen::Index row = d * per;
    Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(x.cols());
    if (pe.include_input) acc += delta.row(row++).transpose().array();
    double freq = std::numbers::pi;
    for (int f = 0; f < pe.num_frequencies; ++f) {
      const Eigen::ArrayXd arg = freq * x.row(d).transpose();
      acc += delta.row(row++).transpose().array() * freq * arg.cos();
      acc -= delta.row(row++).transpose().array() * freq * arg.sin();
      freq *= pe.base;
    }
    out.input_grad.row(d) = acc.transpose().matrix();
  }
  return out;
}

Matrix jacobian(const MlpParams& params, const Vector& x) {
  ForwardCache cache;
  forward(params, x, &cache);
  Matrix jac(params.output_dim(), params.input_dim());
  for (int r = 0; r < params.output_dim(); ++r) {
    const Matrix seed = Vector::Unit(params.output_dim(), r);
    jac.row(r) = backward(params, cache, seed, false).input_grad.col(0).transpose();
  }
  return jac;
}

Vector jacobian_frobenius(const MlpParams& params, const Eigen::Ref<const Matrix>& points) {
  ForwardCache cache;
  forward(params, points, &cache);
  Vector sq = Vector::Zero(points.cols());
  for (int r = 0; r < params.output_dim(); ++r) {
    Matrix seed = Matrix::Zero(params.output_dim(), points.cols());
    seed.row(r).setOnes();
    sq += backward(params, cache, seed, false).input_grad.colwise().squaredNorm().transpose();
  }
  return sq.cwiseSqrt();
}

EmbeddingMatrix hidden_embedding(const MlpParams& params, const Eigen::Ref<const Matrix>& points,
                                 std::optional<std::size_t> layer_index) {
  const std::size_t k = params.layers.size();
  const std::size_t idx = layer_index.value_or(k - 1);
  if (idx < 1 || idx + 1 > k) {
    throw Error(ErrorKind::InvalidArgument, "hidden layer index " + std::to_string(idx) + " outside [1, " +
                                                std::to_string(k - 1) + "]");
  }
  check_batch(params, points);
  Eigen::ArrayXXd h = params.pe ? positional_embed(points, *params.pe).array() : points.array().eval();
  for (std::size_t l = 0; l < idx; ++l) {
    const auto& layer = params.layers[l];
    Eigen::ArrayXXd z(layer.weight.rows(), h.cols());
    z.matrix().noalias() = layer.weight * h.matrix();
    z.colwise() += layer.bias.array();
    apply_activation(*params.specs[l].activation, z, h, nullptr);
  }
  return {idx, h.matrix()};
}

}  // namespace coordfit
