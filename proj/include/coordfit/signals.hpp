#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "coordfit/linalg.hpp"

namespace coordfit {

/// Row-major, channel-interleaved image with values in [0, 1].
struct ImageBuffer {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> values;

  ImageBuffer() = default;
  ImageBuffer(int h, int w, int c, double fill = 0.0);

  double& at(int y, int x, int c = 0) { return values[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int y, int x, int c = 0) const {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

  /// Throws when dims are not positive, channels is not 1 or 3, or a value
  /// lies outside [0, 1].
  void validate() const;
};

struct GridShape {
  int height = 0;
  int width = 0;
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

/// Coordinates d x N in [-1, 1] paired with targets q x N.
struct Dataset {
  Matrix coords;
  Matrix targets;
  double peak = 1.0;              // signal range used for PSNR
  std::optional<GridShape> grid;  // set when the columns enumerate an image row-major

  Eigen::Index size() const { return coords.cols(); }
  void validate() const;
};

/// Binary 8-bit PGM (P5) and PPM (P6) with maxval 255.
ImageBuffer decode_pnm(std::string_view bytes);
std::string encode_pnm(const ImageBuffer& img);
ImageBuffer load_image(const std::string& path);
void save_image(const ImageBuffer& img, const std::string& path);

/// ITU-R BT.601 luma.
ImageBuffer to_grayscale(const ImageBuffer& img);

/// Pixel centers as (y, x) columns in row-major pixel order. The first
/// pixel maps to -1 and the last to +1 on each axis; a size-1 axis maps to 0.
Matrix coordinate_grid(int height, int width);

Dataset image_dataset(const ImageBuffer& img);

/// Inverse of image_dataset for a prediction matrix (channels x h*w);
/// values are clamped to [0, 1].
ImageBuffer image_from_columns(const Eigen::Ref<const Matrix>& columns, GridShape grid);

ImageBuffer make_noise_image(int height, int width, std::uint64_t seed, int channels = 1);

enum class Signal1dKind { Chirp, Square, Mixture };

std::optional<Signal1dKind> signal1d_from_name(std::string_view name);

/// Generator parameters for the synthetic 1-D signals:
///   chirp:   sin(2 pi (f0 x + rate x |x| / 2)); frequency f0 + rate |x|
///   square:  +1 where sin(pi * square_frequency * x) >= 0, else -1
///   mixture: 0.5 sin(2 pi 2x) + 0.3 sin(2 pi 7x + 1) + 0.2 sin(2 pi 19x + 2)
struct Signal1dParams {
  double f0 = 4.0;
  double rate = 12.0;
  double square_frequency = 1.0;
};

/// n equispaced coordinates on [-1, 1]; peak is 2 (targets span [-1, 1]).
Dataset make_1d_signal(Signal1dKind kind, int n, const Signal1dParams& params = {});

enum class SplitMode { All, Checker, Random };

struct SplitSpec {
  SplitMode mode = SplitMode::All;
  int stride = 2;
  double fraction = 0.25;
  std::uint64_t seed = 0;
};

/// `all`, `checker:<stride>`, or `random:<fraction>[:<seed>]`.
SplitSpec parse_split(std::string_view text);
std::string format_split(const SplitSpec& spec);

/// Disjoint train/test partition. checker(s) sends every s-th sample to the
/// test side; random draws round(fraction * N) test samples. Throws when
/// either side would be empty (including mode `all`).
std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec);

/// 64-bit FNV-1a over shapes and the raw bytes of coords and targets.
std::uint64_t dataset_hash(const Dataset& data);

}  // namespace coordfit
