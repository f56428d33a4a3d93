#include "coordfit/experiment.hpp"

#include <charconv>
#include <chrono>
#include <ctime>

#include <json.hpp>

#include "coordfit/error.hpp"

namespace coordfit {

namespace {

using nlohmann::json;

int parse_positive(std::string_view text, const std::string& what) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || v < 1) {
    throw Error(ErrorKind::InvalidArgument, "bad " + what + " '" + std::string(text) + "'");
  }
  return v;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

SourceData load_source(const std::string& source) {
  SourceData out;
  out.source = source;
  const std::string_view s = source;
  if (s.rfind("noise:", 0) == 0) {
    std::string_view rest = s.substr(6);
    std::uint64_t seed = 0;
    if (const auto colon = rest.find(':'); colon != std::string_view::npos) {
      const std::string_view seed_text = rest.substr(colon + 1);
      const auto [ptr, ec] = std::from_chars(seed_text.data(), seed_text.data() + seed_text.size(), seed);
      if (ec != std::errc{} || ptr != seed_text.data() + seed_text.size()) {
        throw Error(ErrorKind::InvalidArgument, "bad noise seed in '" + source + "'");
      }
      rest = rest.substr(0, colon);
    }
    const auto x = rest.find('x');
    if (x == std::string_view::npos) throw Error(ErrorKind::InvalidArgument, "noise source needs <h>x<w>");
    out.image = make_noise_image(parse_positive(rest.substr(0, x), "height"), parse_positive(rest.substr(x + 1), "width"),
                                 seed);
  } else if (const auto colon = s.find(':'); colon != std::string_view::npos && signal1d_from_name(s.substr(0, colon))) {
    out.data = make_1d_signal(*signal1d_from_name(s.substr(0, colon)), parse_positive(s.substr(colon + 1), "length"));
    return out;
  } else if (ends_with(s, ".pgm") || ends_with(s, ".ppm") || ends_with(s, ".pnm")) {
    out.image = load_image(source);
  } else {
    throw Error(ErrorKind::InvalidArgument, "unrecognized source '" + source + "'");
  }
  out.data = image_dataset(*out.image);
  return out;
}

std::string dims_string(const SourceData& src) {
  if (src.image) {
    return std::to_string(src.image->height) + "x" + std::to_string(src.image->width) + "x" +
           std::to_string(src.image->channels);
  }
  return std::to_string(src.data.size());
}

FitOutcome run_fit(const SourceData& src, const FitConfig& cfg, const EpochCallback& on_record) {
  validate(cfg.activation);
  if (cfg.width < 1 || cfg.hidden_layers < 1) throw Error(ErrorKind::InvalidArgument, "width and depth must be >= 1");
  const Dataset& full = src.data;
  Dataset train_set;
  std::optional<Dataset> test_set;
  if (cfg.split.mode == SplitMode::All) {
    train_set = full;
  } else {
    auto [tr, te] = split(full, cfg.split);
    train_set = std::move(tr);
    test_set = std::move(te);
  }

  const int raw_in = static_cast<int>(full.coords.rows());
  const int in_dim = cfg.pe ? cfg.pe->output_dim(raw_in) : raw_in;
  const auto specs = make_layer_specs(in_dim, cfg.width, cfg.hidden_layers, static_cast<int>(full.targets.rows()),
                                      cfg.activation);
  MlpParams params = init_mlp(specs, cfg.init, cfg.pe);

  TrainResult trained = train(std::move(params), train_set, cfg.train, test_set ? &*test_set : nullptr, on_record);
  FitOutcome out;
  out.params = std::move(trained.params);
  out.history = std::move(trained.history);
  out.final_psnr = out.history.final_record().train_psnr;
  out.final_test_psnr = out.history.final_record().test_psnr;
  out.dataset_hash = dataset_hash(full);
  if (full.grid) out.recon = image_from_columns(predict(out.params, full.coords), *full.grid);
  out.train_data = std::move(train_set);
  return out;
}

std::string manifest_to_json(const RunManifest& m) {
  const FitConfig& c = m.config;
  const TrainConfig& t = c.train;
  json j;
  j["version"] = m.version;
  j["source"] = c.source;
  j["dims"] = m.dims;
  j["dataset_hash"] = m.dataset_hash;
  j["split"] = format_split(c.split);
  j["activation"] = format_activation(c.activation);
  j["init"] = init_name(c.init.kind);
  j["init_seed"] = c.init.seed;
  j["width"] = c.width;
  j["hidden_layers"] = c.hidden_layers;
  if (c.pe) {
    j["pe"] = {{"num_frequencies", c.pe->num_frequencies}, {"base", c.pe->base}, {"include_input", c.pe->include_input}};
  } else {
    j["pe"] = nullptr;
  }
  j["train"] = {{"epochs", t.epochs},         {"lr", t.lr},
                {"optimizer", optimizer_name(t.optimizer)},
                {"beta1", t.beta1},           {"beta2", t.beta2},
                {"eps", t.eps},               {"batch_size", t.batch_size},
                {"log_every", t.log_every},   {"diag_every", t.diag_every},
                {"track_ssim", t.track_ssim}, {"seed", t.seed}};
  j["started"] = m.started;
  j["finished"] = m.finished;
  return j.dump(2);
}

RunManifest manifest_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, std::string("manifest: ") + e.what());
  }
  try {
    RunManifest m;
    FitConfig& c = m.config;
    m.version = j.at("version").get<std::string>();
    m.dims = j.at("dims").get<std::string>();
    m.dataset_hash = j.at("dataset_hash").get<std::uint64_t>();
    m.started = j.value("started", "");
    m.finished = j.value("finished", "");
    c.source = j.at("source").get<std::string>();
    c.split = parse_split(j.at("split").get<std::string>());
    c.activation = parse_activation(j.at("activation").get<std::string>());
    const auto init = init_from_name(j.at("init").get<std::string>());
    if (!init) throw Error(ErrorKind::Format, "manifest: unknown init scheme");
    c.init = {*init, j.at("init_seed").get<std::uint64_t>()};
    c.width = j.at("width").get<int>();
    c.hidden_layers = j.at("hidden_layers").get<int>();
    if (const auto& pe = j.at("pe"); !pe.is_null()) {
      c.pe = PositionalEmbeddingSpec{pe.at("num_frequencies").get<int>(), pe.at("base").get<double>(),
                                     pe.at("include_input").get<bool>()};
    }
    const auto& t = j.at("train");
    TrainConfig& tc = c.train;
    tc.epochs = t.at("epochs").get<int>();
    tc.lr = t.at("lr").get<double>();
    const auto opt = optimizer_from_name(t.at("optimizer").get<std::string>());
    if (!opt) throw Error(ErrorKind::Format, "manifest: unknown optimizer");
    tc.optimizer = *opt;
    tc.beta1 = t.at("beta1").get<double>();
    tc.beta2 = t.at("beta2").get<double>();
    tc.eps = t.at("eps").get<double>();
    tc.batch_size = t.at("batch_size").get<int>();
    tc.log_every = t.at("log_every").get<int>();
    tc.diag_every = t.at("diag_every").get<int>();
    tc.track_ssim = t.at("track_ssim").get<bool>();
    tc.seed = t.at("seed").get<std::uint64_t>();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, std::string("manifest: ") + e.what());
  }
}

std::string dataset_manifest_json(const FitConfig& cfg, const std::string& dims) {
  json j;
  j["source"] = cfg.source;
  j["dims"] = dims;
  j["split"] = format_split(cfg.split);
  j["seed"] = cfg.split.seed;
  return j.dump(2);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

const char* toolkit_version() { return COORDFIT_VERSION; }

}  // namespace coordfit
