#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "coordfit/activations.hpp"
#include "coordfit/linalg.hpp"

namespace coordfit {

/// One affine map followed by an optional activation. The last layer of an
/// MLP has no activation.
struct LayerSpec {
  int in_dim = 1;
  int out_dim = 1;
  std::optional<ActivationSpec> activation;

  bool is_linear() const { return !activation.has_value(); }
};

enum class InitKind { XavierUniform, XavierNormal, KaimingUniform, Siren };

std::string_view init_name(InitKind kind);
std::optional<InitKind> init_from_name(std::string_view name);

struct InitScheme {
  InitKind kind = InitKind::XavierUniform;
  std::uint64_t seed = 0;
};

/// Fourier-feature lift applied to every coordinate before the first layer.
/// Each input dimension x expands to
///   [x (if include_input), sin(base^0 pi x), cos(base^0 pi x), ..., cos(base^(L-1) pi x)].
struct PositionalEmbeddingSpec {
  int num_frequencies = 0;
  double base = 2.0;
  bool include_input = true;

  int output_dim(int in_dim) const { return in_dim * (2 * num_frequencies + (include_input ? 1 : 0)); }
  friend bool operator==(const PositionalEmbeddingSpec&, const PositionalEmbeddingSpec&) = default;
};

struct Layer {
  Matrix weight;  // out_dim x in_dim
  Vector bias;    // out_dim
};

struct MlpParams {
  std::vector<LayerSpec> specs;
  std::vector<Layer> layers;
  std::optional<PositionalEmbeddingSpec> pe;

  std::size_t depth() const { return layers.size(); }
  int input_dim() const;  // raw coordinate dimension, before positional embedding
  int output_dim() const { return specs.back().out_dim; }
  std::size_t parameter_count() const;

  /// Throws when the shape chain, the linear-last rule, or finiteness is violated.
  void validate() const;
};

struct ForwardCache {
  Eigen::ArrayXXd raw_input;                // coordinates as given
  std::vector<Eigen::ArrayXXd> activations;  // h^0 (embedded input) ... h^(k-1)
  std::vector<Eigen::ArrayXXd> pre;          // z^0 ... z^(k-1); z^(k-1) is the output
  std::vector<Eigen::ArrayXXd> d1;           // psi'(z^l) for hidden layers

  Eigen::Index batch_size() const { return raw_input.cols(); }
};

/// Same shapes as MlpParams::layers.
struct Gradients {
  std::vector<Layer> layers;

  static Gradients zeros_like(const MlpParams& params);
};

struct BackwardResult {
  Gradients grads;  // empty when weight gradients were not requested
  Matrix input_grad;
};

/// A plain coordinate MLP: `hidden_layers` activated layers of `width` units,
/// then a linear head.
std::vector<LayerSpec> make_layer_specs(int in_dim, int width, int hidden_layers, int out_dim,
                                        const ActivationSpec& activation);

/// Weights are drawn row-major per layer from an independent stream derived
/// from (seed, layer index); biases start at zero.
MlpParams init_mlp(const std::vector<LayerSpec>& specs, const InitScheme& scheme,
                   std::optional<PositionalEmbeddingSpec> pe = std::nullopt);

Matrix positional_embed(const Eigen::Ref<const Matrix>& coords, const PositionalEmbeddingSpec& pe);
Vector positional_embed(const Vector& x, const PositionalEmbeddingSpec& pe);

/// Batch layout: one sample per column.
Matrix forward(const MlpParams& params, const Eigen::Ref<const Matrix>& batch, ForwardCache* cache);
inline Matrix predict(const MlpParams& params, const Eigen::Ref<const Matrix>& batch) {
  return forward(params, batch, nullptr);
}

BackwardResult backward(const MlpParams& params, const ForwardCache& cache, const Eigen::Ref<const Matrix>& dl_dy,
                        bool weight_grads = true);

/// J(f)_x, out_dim x input_dim, with respect to the raw coordinate.
Matrix jacobian(const MlpParams& params, const Vector& x);

/// ||J(f)_x||_F for every column of `points`.
Vector jacobian_frobenius(const MlpParams& params, const Eigen::Ref<const Matrix>& points);

/// Columns of a hidden representation over a point set.
struct EmbeddingMatrix {
  std::size_t depth_index = 0;
  Matrix matrix;  // D x N
};

/// Output of hidden layer `layer_index` (1-based, 1 <= layer_index <= k-1)
/// at every point. The default, k-1, is the penultimate representation.
EmbeddingMatrix hidden_embedding(const MlpParams& params, const Eigen::Ref<const Matrix>& points,
                                 std::optional<std::size_t> layer_index = std::nullopt);

/// Portable generator: std::mt19937_64 with hand-rolled uniform and normal
/// transforms, so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();                         // standard normal, Box-Muller
  std::size_t below(std::size_t n);        // uniform integer in [0, n)

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Checkpoint I/O. Text format, lossless at 64-bit precision; see
/// docs/checkpoint.md.
void save_checkpoint(const MlpParams& params, std::ostream& out);
MlpParams load_checkpoint(std::istream& in);
void save_checkpoint(const MlpParams& params, const std::string& path);
MlpParams load_checkpoint(const std::string& path);

}  // namespace coordfit
