// coordfit: fit coordinate MLPs to images and 1-D signals, sweep activation
// parameters, compare initializations and run the memorization oracle.
// Every run writes a self-describing directory; stdout is key=value lines.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coordfit/diagnostics.hpp"
#include "coordfit/error.hpp"
#include "coordfit/experiment.hpp"

namespace fs = std::filesystem;
using namespace coordfit;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void emit(const std::string& key, const std::string& value) { std::cout << key << '=' << value << '\n'; }
void emit(const std::string& key, double value) { emit(key, num(value)); }

struct CommonOptions {
  std::string image;
  std::string act = "gaussian:a=0.05";
  std::string init = "xavier_uniform";
  std::uint64_t seed = 0;
  int epochs = 2000;
  double lr = 1e-3;
  int width = 256;
  int depth = 4;
  std::string pe;
  std::string split = "all";
  int diag_every = 0;
  int log_every = 1;
  int batch_size = 0;
  std::string optimizer = "adam";
  bool ssim = false;
  bool no_diag = false;
  bool quiet = false;
  std::string out;
};

void add_common(CLI::App& app, CommonOptions& o, bool with_act, bool with_init) {
  app.add_option("--image", o.image, "Signal: image.pgm|ppm, noise:<h>x<w>[:<seed>], chirp|square|mixture:<n>")
      ->required();
  if (with_act) app.add_option("--act", o.act, "Activation, e.g. gaussian:a=0.05")->capture_default_str();
  if (with_init) app.add_option("--init", o.init, "xavier_uniform|xavier_normal|kaiming_uniform|siren")->capture_default_str();
  app.add_option("--seed", o.seed, "Seed for initialization and batching")->capture_default_str();
  app.add_option("--epochs", o.epochs, "Optimizer steps")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--lr", o.lr, "Learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--width", o.width, "Hidden width")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--depth", o.depth, "Number of hidden layers")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--pe", o.pe, "Positional embedding, L=<k>[,base=<b>][,no-input]");
  app.add_option("--split", o.split, "all | checker:<s> | random:<f>[:<seed>]")->capture_default_str();
  app.add_option("--diag-every", o.diag_every, "Stable-rank capture period in epochs (0 = off)")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  app.add_option("--log-every", o.log_every, "metrics.csv period in epochs")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--batch-size", o.batch_size, "Minibatch size (0 = full batch)")->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  app.add_option("--optimizer", o.optimizer, "adam|sgd")->capture_default_str();
  app.add_flag("--ssim", o.ssim, "Track SSIM in metrics.csv");
  app.add_flag("--no-diag", o.no_diag, "Skip the post-training diagnostics report");
  app.add_flag("--quiet", o.quiet, "No progress on stderr");
  app.add_option("--out", o.out, "Output root (default $COORDFIT_RUNS_DIR or ./runs)");
}

PositionalEmbeddingSpec parse_pe(const std::string& text) {
  PositionalEmbeddingSpec pe;
  bool have_l = false;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "no-input") {
      pe.include_input = false;
    } else if (item.rfind("L=", 0) == 0) {
      const char* first = item.data() + 2;
      const auto [ptr, ec] = std::from_chars(first, item.data() + item.size(), pe.num_frequencies);
      if (ec != std::errc{} || ptr != item.data() + item.size() || pe.num_frequencies < 0) {
        throw UsageError("bad --pe frequency count '" + item + "'");
      }
      have_l = true;
    } else if (item.rfind("base=", 0) == 0) {
      const auto [ptr, ec] = std::from_chars(item.data() + 5, item.data() + item.size(), pe.base);
      if (ec != std::errc{} || ptr != item.data() + item.size() || !(pe.base > 0.0)) {
        throw UsageError("bad --pe base '" + item + "'");
      }
    } else {
      throw UsageError("bad --pe item '" + item + "'");
    }
  }
  if (!have_l) throw UsageError("--pe needs L=<k>");
  return pe;
}

ActivationSpec parse_act_arg(const std::string& text) {
  try {
    return parse_activation(text);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

InitKind parse_init_arg(const std::string& text) {
  const auto kind = init_from_name(text);
  if (!kind) throw UsageError("unknown init scheme '" + text + "'");
  return *kind;
}

FitConfig build_config(const CommonOptions& o) {
  FitConfig cfg;
  cfg.source = o.image;
  cfg.activation = parse_act_arg(o.act);
  cfg.init = {parse_init_arg(o.init), o.seed};
  cfg.width = o.width;
  cfg.hidden_layers = o.depth;
  if (!o.pe.empty()) cfg.pe = parse_pe(o.pe);
  try {
    cfg.split = parse_split(o.split);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto opt = optimizer_from_name(o.optimizer);
  if (!opt) throw UsageError("unknown optimizer '" + o.optimizer + "'");
  TrainConfig& t = cfg.train;
  t.epochs = o.epochs;
  t.lr = o.lr;
  t.optimizer = *opt;
  t.batch_size = o.batch_size;
  t.log_every = o.log_every;
  t.diag_every = o.diag_every;
  t.track_ssim = o.ssim;
  t.seed = o.seed;
  return cfg;
}

fs::path output_root(const std::string& out) {
  if (!out.empty()) return out;
  if (const char* env = std::getenv("COORDFIT_RUNS_DIR"); env && *env) return env;
  return "runs";
}

std::string slug(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') c = '_';
  }
  return s;
}

// Creates root/<stem>, or root/<stem>-<k> when that exists. Never reuses a directory.
fs::path fresh_dir(const fs::path& root, const std::string& stem) {
  fs::create_directories(root);
  for (int k = 0;; ++k) {
    fs::path p = root / (k == 0 ? stem : stem + "-" + std::to_string(k));
    if (fs::create_directory(p)) return p;
  }
}

std::string run_stem(const FitConfig& cfg) {
  return utc_timestamp() + "-" + slug(format_activation(cfg.activation)) + "-" +
         std::string(init_name(cfg.init.kind)) + "-" + std::to_string(cfg.init.seed);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct CellResult {
  fs::path dir;
  FitOutcome outcome;
  std::optional<DiagnosticsReport> report;
};

// Runs one fit into `dir` and writes every artifact.
CellResult run_cell(const SourceData& src, const FitConfig& cfg, const fs::path& dir, bool diag, bool quiet) {
  RunManifest manifest;
  manifest.config = cfg;
  manifest.dims = dims_string(src);
  manifest.dataset_hash = dataset_hash(src.data);
  manifest.version = toolkit_version();
  manifest.started = utc_timestamp();
  write_file(dir / "dataset.json", dataset_manifest_json(cfg, manifest.dims));
  write_file(dir / "manifest.json", manifest_to_json(manifest));

  const int progress_every = std::max(1, cfg.train.epochs / 10);
  EpochCallback progress;
  if (!quiet) {
    progress = [&](const EpochRecord& r) {
      if (r.epoch % progress_every == 0 || r.epoch == cfg.train.epochs) {
        std::cerr << "[" << dir.filename().string() << "] epoch " << r.epoch << " psnr " << num(r.train_psnr) << '\n';
      }
    };
  }
  CellResult cell;
  cell.dir = dir;
  cell.outcome = run_fit(src, cfg, progress);
  manifest.finished = utc_timestamp();
  write_file(dir / "manifest.json", manifest_to_json(manifest));
  write_file(dir / "metrics.csv", cell.outcome.history.to_csv());
  save_checkpoint(cell.outcome.params, (dir / "model.ckpt").string());
  if (cell.outcome.recon) {
    save_image(*cell.outcome.recon, (dir / (cell.outcome.recon->channels == 3 ? "recon.ppm" : "recon.pgm")).string());
  }
  if (diag) {
    DiagnosticsConfig dcfg;
    dcfg.seed = cfg.init.seed;
    cell.report = run_diagnostics(cell.outcome.params, src.data, dcfg);
    write_file(dir / "diag.json", report_to_json(*cell.report));
    if (src.data.grid && static_cast<std::size_t>(src.data.size()) == cell.report->points) {
      save_image(heat_map(cell.report->lipschitz_map, *src.data.grid), (dir / "lipschitz.pgm").string());
    }
  }
  return cell;
}

void emit_cell(const CellResult& cell) {
  emit("run_dir", cell.dir.string());
  emit("final_loss", cell.outcome.history.final_record().train_loss);
  emit("final_psnr", cell.outcome.final_psnr);
  if (cell.outcome.final_test_psnr) emit("test_psnr", *cell.outcome.final_test_psnr);
  if (cell.report) {
    emit("srank_penultimate", cell.report->stable_ranks.back());
    emit("lipschitz_p95", cell.report->lipschitz.p95);
    if (cell.report->norm_deviation) emit("norm_deviation", *cell.report->norm_deviation);
  }
}

int cmd_fit(const CommonOptions& o) {
  const FitConfig cfg = build_config(o);
  const SourceData src = load_source(cfg.source);
  const auto start = std::chrono::steady_clock::now();
  const CellResult cell = run_cell(src, cfg, fresh_dir(output_root(o.out), run_stem(cfg)), !o.no_diag, o.quiet);
  emit_cell(cell);
  emit("elapsed_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  return 0;
}

int cmd_sweep(const CommonOptions& o, const std::string& param, std::vector<double> values) {
  if (values.empty()) throw UsageError("sweep needs at least one value");
  if (param != "a" && param != "b") throw UsageError("--param must be a or b");
  FitConfig base = build_config(o);
  if ((param == "a" && !uses_a(base.activation.kind)) || (param == "b" && !uses_b(base.activation.kind))) {
    throw UsageError(std::string(kind_name(base.activation.kind)) + " has no parameter " + param);
  }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  for (const double v : values) {
    ActivationSpec probe = base.activation;
    (param == "a" ? probe.a : probe.b) = v;
    try {
      validate(probe);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  const SourceData src = load_source(base.source);
  const fs::path dir = fresh_dir(output_root(o.out), utc_timestamp() + "-sweep-" + std::string(kind_name(base.activation.kind)) +
                                                         "-" + param + "-" + std::string(init_name(base.init.kind)) + "-" +
                                                         std::to_string(base.init.seed));
  std::ostringstream summary, layers;
  summary << "param,psnr,srank_penultimate\n";
  layers << "param,layer,srank,psnr\n";
  for (const double v : values) {
    FitConfig cfg = base;
    (param == "a" ? cfg.activation.a : cfg.activation.b) = v;
    const fs::path cell_dir = dir / (param + "=" + num(v));
    fs::create_directory(cell_dir);
    const CellResult cell = run_cell(src, cfg, cell_dir, true, o.quiet);
    const auto& ranks = cell.report->stable_ranks;
    summary << num(v) << ',' << num(cell.outcome.final_psnr) << ',' << num(ranks.back()) << '\n';
    for (std::size_t l = 0; l < ranks.size(); ++l) {
      layers << num(v) << ',' << l + 1 << ',' << num(ranks[l]) << ',' << num(cell.outcome.final_psnr) << '\n';
    }
    emit(param + "=" + num(v) + ".psnr", cell.outcome.final_psnr);
    emit(param + "=" + num(v) + ".srank_penultimate", ranks.back());
  }
  write_file(dir / "sweep.csv", summary.str());
  write_file(dir / "layers.csv", layers.str());
  emit("sweep_dir", dir.string());
  return 0;
}

int cmd_init_robustness(const CommonOptions& o, std::vector<std::string> acts, std::vector<std::string> inits) {
  if (acts.empty()) acts = {"gaussian:a=0.05", "sin:a=30"};
  if (inits.empty()) inits = {"xavier_normal", "siren"};
  std::vector<ActivationSpec> act_specs;
  std::vector<InitKind> init_kinds;
  for (const auto& a : acts) act_specs.push_back(parse_act_arg(a));
  for (const auto& i : inits) init_kinds.push_back(parse_init_arg(i));
  const FitConfig base = build_config(o);
  const SourceData src = load_source(base.source);
  const fs::path dir = fresh_dir(output_root(o.out), utc_timestamp() + "-init-robustness-" + std::to_string(base.init.seed));
  std::ostringstream summary;
  summary << "activation,init,final_psnr\n";
  for (const auto& act : act_specs) {
    for (const InitKind init : init_kinds) {
      FitConfig cfg = base;
      cfg.activation = act;
      cfg.init.kind = init;
      const std::string cell_name = slug(format_activation(act)) + "-" + std::string(init_name(init));
      const fs::path cell_dir = dir / cell_name;
      fs::create_directory(cell_dir);
      const CellResult cell = run_cell(src, cfg, cell_dir, !o.no_diag, o.quiet);
      std::ostringstream curve;
      curve << "epoch,psnr\n";
      for (const auto& r : cell.outcome.history.records) curve << r.epoch << ',' << num(r.train_psnr) << '\n';
      write_file(dir / (cell_name + ".csv"), curve.str());
      summary << format_activation(act) << ',' << init_name(init) << ',' << num(cell.outcome.final_psnr) << '\n';
      emit(cell_name + ".final_psnr", cell.outcome.final_psnr);
    }
  }
  write_file(dir / "summary.csv", summary.str());
  emit("grid_dir", dir.string());
  return 0;
}

// Training points: one per cell of [-1, 1] split into n equal cells, placed
// uniformly at random in the central half of its cell (or at the cell center
// for the equispaced layout). Test points are the midpoints between
// consecutive training points.
int cmd_oracle(int n, double sigma, std::uint64_t seed, const std::string& layout) {
  if (n < 1) throw UsageError("--n must be >= 1");
  if (!(sigma > 0.0)) throw UsageError("--sigma must be > 0");
  if (layout != "random" && layout != "equispaced") throw UsageError("--layout must be random or equispaced");
  Rng rng(seed, 0x6f7261636c65ULL);
  const double cell = 2.0 / n;
  Vector train_x(n);
  Matrix targets(1, n);
  for (int i = 0; i < n; ++i) {
    const double jitter = layout == "random" ? rng.uniform(-0.25, 0.25) : 0.0;
    train_x(i) = -1.0 + cell * (i + 0.5 + jitter);
  }
  for (int i = 0; i < n; ++i) targets(0, i) = rng.uniform(-1.0, 1.0);
  Vector test_x(std::max(0, n - 1));
  for (int i = 0; i + 1 < n; ++i) test_x(i) = 0.5 * (train_x(i) + train_x(i + 1));
  const OracleResult r = memorization_oracle(train_x, targets, test_x, sigma);
  nlohmann::json j;
  j["n"] = n;
  j["sigma"] = sigma;
  j["layout"] = layout;
  j["seed"] = seed;
  j["train_mse"] = r.train_mse;
  j["test_pred_norm"] = r.test_pred_norm;
  j["target_rms"] = r.target_rms;
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_replay(const std::string& manifest_path, const std::string& out, bool quiet) {
  const RunManifest m = manifest_from_json(read_file(manifest_path));
  const SourceData src = load_source(m.config.source);
  if (dataset_hash(src.data) != m.dataset_hash) {
    throw Error(ErrorKind::Format, "dataset hash differs from the manifest; the source changed");
  }
  const fs::path original = fs::path(manifest_path).parent_path();
  const fs::path root = out.empty() ? original.parent_path() : fs::path(out);
  const fs::path dir = fresh_dir(root, run_stem(m.config) + "-replay");
  const bool diag = fs::exists(original / "diag.json");
  const CellResult cell = run_cell(src, m.config, dir, diag, quiet);
  emit_cell(cell);
  if (fs::exists(original / "metrics.csv")) {
    const bool same = read_file(original / "metrics.csv") == read_file(dir / "metrics.csv");
    emit("identical", same ? "1" : "0");
    return same ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coordinate-MLP fitting and diagnostics"};
  app.set_version_flag("--version", std::string(toolkit_version()));
  app.require_subcommand(1);

  CommonOptions fit_opts;
  auto* fit = app.add_subcommand("fit", "Fit one signal");
  add_common(*fit, fit_opts, true, true);

  CommonOptions sweep_opts;
  std::string sweep_param = "a";
  std::vector<double> sweep_values;
  auto* sweep = app.add_subcommand("sweep", "Fit once per activation parameter value");
  add_common(*sweep, sweep_opts, true, true);
  sweep->add_option("--param", sweep_param, "Activation parameter to sweep (a or b)")->capture_default_str();
  sweep->add_option("--values", sweep_values, "Comma-separated parameter values")->delimiter(',')->required();

  CommonOptions grid_opts;
  std::vector<std::string> grid_acts, grid_inits;
  auto* grid = app.add_subcommand("init-robustness", "Activation x initialization grid with convergence curves");
  add_common(*grid, grid_opts, false, false);
  grid->add_option("--act", grid_acts, "Activation (repeatable; default gaussian:a=0.05 and sin:a=30)");
  grid->add_option("--init", grid_inits, "Init scheme (repeatable; default xavier_normal and siren)");

  int oracle_n = 64;
  double oracle_sigma = 1e-3;
  std::uint64_t oracle_seed = 0;
  std::string oracle_layout = "random";
  auto* oracle = app.add_subcommand("oracle", "Memorization oracle with one-hot RBF features");
  oracle->add_option("--n", oracle_n, "Number of training points")->capture_default_str();
  oracle->add_option("--sigma", oracle_sigma, "RBF width")->capture_default_str();
  oracle->add_option("--seed", oracle_seed, "Seed for point jitter and targets")->capture_default_str();
  oracle->add_option("--layout", oracle_layout, "random|equispaced")->capture_default_str();

  std::string replay_manifest, replay_out;
  bool replay_quiet = false;
  auto* replay = app.add_subcommand("replay", "Re-run a recorded run and compare metrics.csv");
  replay->add_option("manifest", replay_manifest, "Path to manifest.json")->required();
  replay->add_option("--out", replay_out, "Output root (default: next to the original run)");
  replay->add_flag("--quiet", replay_quiet, "No progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*fit) return cmd_fit(fit_opts);
    if (*sweep) return cmd_sweep(sweep_opts, sweep_param, sweep_values);
    if (*grid) return cmd_init_robustness(grid_opts, grid_acts, grid_inits);
    if (*oracle) return cmd_oracle(oracle_n, oracle_sigma, oracle_seed, oracle_layout);
    if (*replay) return cmd_replay(replay_manifest, replay_out, replay_quiet);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
