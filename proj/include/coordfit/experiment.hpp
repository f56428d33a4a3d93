#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "coordfit/activations.hpp"
#include "coordfit/network.hpp"
#include "coordfit/signals.hpp"
#include "coordfit/training.hpp"

namespace coordfit {

/// A resolved data source. `source` strings are one of
///   <path>.pgm | <path>.ppm       image file
///   noise:<h>x<w>[:<seed>]        uniform noise image
///   chirp:<n> | square:<n> | mixture:<n>   1-D signal
struct SourceData {
  std::string source;
  Dataset data;
  std::optional<ImageBuffer> image;
};

SourceData load_source(const std::string& source);

struct FitConfig {
  std::string source;
  ActivationSpec activation = default_activation(ActivationKind::Gaussian);
  InitScheme init{InitKind::XavierUniform, 0};
  int width = 256;
  int hidden_layers = 4;
  std::optional<PositionalEmbeddingSpec> pe;
  SplitSpec split;
  TrainConfig train;
};

struct FitOutcome {
  MlpParams params;
  TrainHistory history;
  double final_psnr = 0.0;
  std::optional<double> final_test_psnr;
  std::optional<ImageBuffer> recon;  // image sources only
  std::uint64_t dataset_hash = 0;
  Dataset train_data;
};

/// Builds the network for `cfg`, trains it on `src` and reconstructs the
/// full signal from the trained network.
FitOutcome run_fit(const SourceData& src, const FitConfig& cfg, const EpochCallback& on_record = {});

struct RunManifest {
  FitConfig config;
  std::uint64_t dataset_hash = 0;
  std::string dims;  // "HxWxC" for images, "N" for 1-D signals
  std::string version;
  std::string started;
  std::string finished;
};

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const std::string& text);

/// Dataset manifest {source, dims, split, seed}.
std::string dataset_manifest_json(const FitConfig& cfg, const std::string& dims);

std::string dims_string(const SourceData& src);

/// UTC timestamp, e.g. 20261015T093000Z.
std::string utc_timestamp();

const char* toolkit_version();

}  // namespace coordfit
