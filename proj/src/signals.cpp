#include "coordfit/signals.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "coordfit/error.hpp"
#include "coordfit/network.hpp"

namespace coordfit {

ImageBuffer::ImageBuffer(int h, int w, int c, double fill)
    : height(h), width(w), channels(c), values(static_cast<std::size_t>(h) * w * c, fill) {}

void ImageBuffer::validate() const {
  if (height < 1 || width < 1) throw Error(ErrorKind::InvalidArgument, "image dims must be >= 1");
  if (channels != 1 && channels != 3) throw Error(ErrorKind::InvalidArgument, "channels must be 1 or 3");
  if (values.size() != pixel_count() * channels) throw Error(ErrorKind::DimensionMismatch, "image value count");
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::InvalidArgument, "image value outside [0, 1]");
  }
}

void Dataset::validate() const {
  if (coords.cols() != targets.cols()) throw Error(ErrorKind::DimensionMismatch, "coords/targets sample count");
  if (!coords.allFinite() || !targets.allFinite()) throw Error(ErrorKind::NonFinite, "dataset has non-finite values");
  if (coords.size() > 0 && (coords.maxCoeff() > 1.0 || coords.minCoeff() < -1.0)) {
    throw Error(ErrorKind::InvalidArgument, "coordinates outside [-1, 1]");
  }
  if (grid && static_cast<Eigen::Index>(grid->height) * grid->width != coords.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "grid shape does not match sample count");
  }
}

namespace {

// Reads one header integer, skipping whitespace and '#' comments.
int read_header_int(std::string_view bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  int value = 0;
  auto [ptr, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), value);
  if (ec != std::errc() || value < 0) throw Error(ErrorKind::Format, "malformed PNM header");
  pos = static_cast<std::size_t>(ptr - bytes.data());
  return value;
}

}  // namespace

ImageBuffer decode_pnm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw Error(ErrorKind::Format, "not a PNM file");
  int channels = 0;
  if (bytes[1] == '5') {
    channels = 1;
  } else if (bytes[1] == '6') {
    channels = 3;
  } else {
    throw Error(ErrorKind::Format, "unsupported PNM variant P" + std::string(1, bytes[1]));
  }
  std::size_t pos = 2;
  const int width = read_header_int(bytes, pos);
  const int height = read_header_int(bytes, pos);
  const int maxval = read_header_int(bytes, pos);
  if (width < 1 || height < 1) throw Error(ErrorKind::Format, "PNM dims must be >= 1");
  if (maxval != 255) throw Error(ErrorKind::Format, "unsupported maxval " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw Error(ErrorKind::Format, "missing whitespace after PNM header");
  }
  ++pos;
  const std::size_t need = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() - pos < need) {
    throw Error(ErrorKind::Format, "truncated PNM payload: need " + std::to_string(need) + " bytes, have " +
                                       std::to_string(bytes.size() - pos));
  }
  ImageBuffer img(height, width, channels);
  for (std::size_t i = 0; i < need; ++i) {
    img.values[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
  }
  return img;
}

std::string encode_pnm(const ImageBuffer& img) {
  img.validate();
  std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.values.size());
  for (double v : img.values) out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  return out;
}

ImageBuffer load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_pnm(bytes);
}

void save_image(const ImageBuffer& img, const std::string& path) {
  const std::string bytes = encode_pnm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

ImageBuffer to_grayscale(const ImageBuffer& img) {
  if (img.channels == 1) return img;
  ImageBuffer out(img.height, img.width, 1);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    const double* rgb = &img.values[p * 3];
    out.values[p] = std::clamp(0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2], 0.0, 1.0);
  }
  return out;
}

Matrix coordinate_grid(int height, int width) {
  if (height < 1 || width < 1) throw Error(ErrorKind::InvalidArgument, "grid dims must be >= 1");
  auto axis = [](int i, int n) { return n == 1 ? 0.0 : -1.0 + 2.0 * i / (n - 1); };
  Matrix grid(2, static_cast<Eigen::Index>(height) * width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Index col = static_cast<Eigen::Index>(y) * width + x;
      grid(0, col) = axis(y, height);
      grid(1, col) = axis(x, width);
    }
  }
  return grid;
}

Dataset image_dataset(const ImageBuffer& img) {
  img.validate();
  Dataset d;
  d.coords = coordinate_grid(img.height, img.width);
  d.targets.resize(img.channels, static_cast<Eigen::Index>(img.pixel_count()));
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    for (int c = 0; c < img.channels; ++c) d.targets(c, static_cast<Eigen::Index>(p)) = img.values[p * img.channels + c];
  }
  d.peak = 1.0;
  d.grid = GridShape{img.height, img.width};
  return d;
}

ImageBuffer image_from_columns(const Eigen::Ref<const Matrix>& columns, GridShape grid) {
  if (columns.cols() != static_cast<Eigen::Index>(grid.height) * grid.width) {
    throw Error(ErrorKind::DimensionMismatch, "prediction count does not match grid");
  }
  ImageBuffer img(grid.height, grid.width, static_cast<int>(columns.rows()));
  for (Eigen::Index p = 0; p < columns.cols(); ++p) {
    for (Eigen::Index c = 0; c < columns.rows(); ++c) {
      img.values[static_cast<std::size_t>(p * columns.rows() + c)] = std::clamp(columns(c, p), 0.0, 1.0);
    }
  }
  return img;
}

ImageBuffer make_noise_image(int height, int width, std::uint64_t seed, int channels) {
  ImageBuffer img(height, width, channels);
  img.validate();
  Rng rng(seed, 0x6e6f697365ULL);
  for (double& v : img.values) v = rng.uniform();
  return img;
}

std::optional<Signal1dKind> signal1d_from_name(std::string_view name) {
  if (name == "chirp") return Signal1dKind::Chirp;
  if (name == "square") return Signal1dKind::Square;
  if (name == "mixture") return Signal1dKind::Mixture;
  return std::nullopt;
}

Dataset make_1d_signal(Signal1dKind kind, int n, const Signal1dParams& params) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "1-D signal needs n >= 2");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Dataset d;
  d.coords.resize(1, n);
  d.targets.resize(1, n);
  for (int i = 0; i < n; ++i) {
    const double x = i + 1 == n ? 1.0 : -1.0 + 2.0 * i / (n - 1);
    double y = 0.0;
    switch (kind) {
      case Signal1dKind::Chirp: y = std::sin(two_pi * (params.f0 * x + 0.5 * params.rate * x * std::abs(x))); break;
      case Signal1dKind::Square:
        y = std::sin(std::numbers::pi * params.square_frequency * x) >= 0.0 ? 1.0 : -1.0;
        break;
      case Signal1dKind::Mixture:
        y = 0.5 * std::sin(two_pi * 2.0 * x) + 0.3 * std::sin(two_pi * 7.0 * x + 1.0) +
            0.2 * std::sin(two_pi * 19.0 * x + 2.0);
        break;
    }
    d.coords(0, i) = x;
    d.targets(0, i) = y;
  }
  d.peak = 2.0;
  return d;
}

SplitSpec parse_split(std::string_view text) {
  auto number = [&](std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw Error(ErrorKind::InvalidArgument, "bad split spec '" + std::string(text) + "'");
    }
    return v;
  };
  SplitSpec spec;
  const auto colon = text.find(':');
  const std::string_view mode = text.substr(0, colon);
  const std::string_view rest = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  if (mode == "all" && rest.empty()) {
    spec.mode = SplitMode::All;
  } else if (mode == "checker") {
    spec.mode = SplitMode::Checker;
    const double s = number(rest);
    if (s < 2 || s != std::floor(s)) throw Error(ErrorKind::InvalidArgument, "checker stride must be an integer >= 2");
    spec.stride = static_cast<int>(s);
  } else if (mode == "random") {
    spec.mode = SplitMode::Random;
    const auto c2 = rest.find(':');
    spec.fraction = number(rest.substr(0, c2));
    if (c2 != std::string_view::npos) spec.seed = static_cast<std::uint64_t>(number(rest.substr(c2 + 1)));
    if (!(spec.fraction > 0.0 && spec.fraction < 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "random split fraction must lie in (0, 1)");
    }
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown split spec '" + std::string(text) + "'");
  }
  return spec;
}

std::string format_split(const SplitSpec& spec) {
  switch (spec.mode) {
    case SplitMode::All: return "all";
    case SplitMode::Checker: return "checker:" + std::to_string(spec.stride);
    case SplitMode::Random: {
      char buf[64];
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), spec.fraction);
      return "random:" + std::string(buf, ptr) + ":" + std::to_string(spec.seed);
    }
  }
  return "all";
}

std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec) {
  const Eigen::Index n = data.size();
  std::vector<bool> is_test(static_cast<std::size_t>(n), false);
  switch (spec.mode) {
    case SplitMode::All:
      throw Error(ErrorKind::InvalidArgument, "split mode 'all' has no test side; use the dataset directly");
    case SplitMode::Checker:
      if (spec.stride < 2) throw Error(ErrorKind::InvalidArgument, "checker stride must be >= 2");
      for (Eigen::Index i = 0; i < n; ++i) is_test[i] = (i % spec.stride) == spec.stride - 1;
      break;
    case SplitMode::Random: {
      if (!(spec.fraction > 0.0 && spec.fraction < 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "random split fraction must lie in (0, 1)");
      }
      const auto count = static_cast<std::size_t>(std::llround(spec.fraction * static_cast<double>(n)));
      std::vector<std::size_t> idx(static_cast<std::size_t>(n));
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      Rng rng(spec.seed, 0x73706c6974ULL);
      for (std::size_t i = 0; i < count && i < idx.size(); ++i) {
        std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
        is_test[idx[i]] = true;
      }
      break;
    }
  }
  std::vector<Eigen::Index> train_idx;
  std::vector<Eigen::Index> test_idx;
  for (Eigen::Index i = 0; i < n; ++i) (is_test[i] ? test_idx : train_idx).push_back(i);
  if (train_idx.empty() || test_idx.empty()) {
    throw Error(ErrorKind::InvalidArgument, "split leaves an empty side (" + std::to_string(train_idx.size()) +
                                                " train, " + std::to_string(test_idx.size()) + " test)");
  }
  auto take = [&](const std::vector<Eigen::Index>& idx) {
    Dataset d;
    d.coords = data.coords(Eigen::all, idx);
    d.targets = data.targets(Eigen::all, idx);
    d.peak = data.peak;
    return d;
  };
  return {take(train_idx), take(test_idx)};
}

std::uint64_t dataset_hash(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const void* p, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::int64_t shape[4] = {data.coords.rows(), data.coords.cols(), data.targets.rows(), data.targets.cols()};
  feed(shape, sizeof(shape));
  feed(data.coords.data(), sizeof(double) * static_cast<std::size_t>(data.coords.size()));
  feed(data.targets.data(), sizeof(double) * static_cast<std::size_t>(data.targets.size()));
  return h;
}

}  // namespace coordfit
