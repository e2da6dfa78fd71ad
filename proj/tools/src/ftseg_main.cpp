// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

// Command-line front end: synth | train | eval | ablate | gradcheck | curve.
// Every subcommand accepts --config with one `key = value` per line and `#`
// comments; command-line flags override file values and unknown keys are
// rejected. Exit codes: 0 success, 2 usage, 3 training failure,
// 4 checkpoint/dataset incompatibility, 5 verification failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ftseg/data.hpp"
#include "ftseg/errors.hpp"
#include "ftseg/image_io.hpp"
#include "ftseg/losses.hpp"
#include "ftseg/model.hpp"
#include "ftseg/train.hpp"
#include "ftseg/verify.hpp"

namespace fs = std::filesystem;
using namespace ftseg;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitTrainFailure = 3;
constexpr int kExitIncompatible = 4;
constexpr int kExitVerification = 5;

struct ExitWith {
  int code;
};

void add_flat_config(CLI::App* sub) {
  // Later sources override earlier ones: config expansions are injected
  // before the explicit command-line flags (see expand_config_args).
  sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  static std::string dummy;
  sub->add_option("--config", dummy,
                  "flat `key = value` configuration file; # starts a comment; "
                  "command-line flags override file values");
}

// Reads a flat config file and renders each entry as a --key=value token.
// Unknown keys are rejected downstream by the normal option matching.
std::vector<std::string> read_flat_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file '" + path + "'");
  std::vector<std::string> tokens;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected `key = value`, got '" + line + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected `key = value`, got '" + line + "'");
    for (char& c : key)
      if (c == '_') c = '-';
    tokens.push_back("--" + key + "=" + value);
  }
  return tokens;
}

// Splices the config expansion right after the subcommand token so explicit
// command-line flags stay later and win under the take-last policy.
std::vector<std::string> expand_config_args(int argc, char** argv) {
  std::vector<std::string> raw(argv + 1, argv + argc);
  std::vector<std::string> expansions;
  std::vector<std::string> rest;
  std::string subcommand;
  size_t i = 0;
  if (!raw.empty() && !raw[0].empty() && raw[0][0] != '-') {
    subcommand = raw[0];
    i = 1;
  }
  for (; i < raw.size(); ++i) {
    const std::string& token = raw[i];
    if (token == "--config") {
      if (i + 1 >= raw.size()) throw std::invalid_argument("--config expects a file path");
      auto file_tokens = read_flat_config(raw[++i]);
      expansions.insert(expansions.end(), file_tokens.begin(), file_tokens.end());
    } else if (token.rfind("--config=", 0) == 0) {
      auto file_tokens = read_flat_config(token.substr(9));
      expansions.insert(expansions.end(), file_tokens.begin(), file_tokens.end());
    } else {
      rest.push_back(token);
    }
  }
  std::vector<std::string> result;
  if (!subcommand.empty()) result.push_back(subcommand);
  result.insert(result.end(), expansions.begin(), expansions.end());
  result.insert(result.end(), rest.begin(), rest.end());
  return result;
}

// ---------------------------------------------------------------------------
// shared option blocks
// ---------------------------------------------------------------------------

struct DataOptions {
  std::string data;
  int height = 64;
  int width = 64;
};

void add_data_options(CLI::App* sub, DataOptions& opts) {
  sub->add_option("--data", opts.data, "dataset directory holding images/ and masks/")
      ->required();
  sub->add_option("--height", opts.height, "target raster height")->check(CLI::PositiveNumber);
  sub->add_option("--width", opts.width, "target raster width")->check(CLI::PositiveNumber);
}

std::vector<Sample> load_dataset(const DataOptions& opts) {
  return load_image_dir((fs::path(opts.data) / "images").string(),
                        (fs::path(opts.data) / "masks").string(), opts.height, opts.width);
}

struct ModelOptions {
  std::string variant = "attn_unet_multi_input";
  int depth = 4;
  int base_channels = 16;
  std::string deep_supervision = "auto";
  uint64_t seed = 0;
};

void add_model_options(CLI::App* sub, ModelOptions& opts) {
  sub->add_option("--variant", opts.variant, "unet | attn_unet | attn_unet_multi_input")
      ->check(CLI::IsMember({"unet", "attn_unet", "attn_unet_multi_input"}));
  sub->add_option("--depth", opts.depth, "encoder stages")->check(CLI::Range(2, 8));
  sub->add_option("--base-channels", opts.base_channels, "channels at the first stage")
      ->check(CLI::PositiveNumber);
  sub->add_option("--deep-supervision", opts.deep_supervision,
                  "auto | on | off (auto: on for attn_unet_multi_input)")
      ->check(CLI::IsMember({"auto", "on", "off"}));
}

ModelConfig make_model_config(const ModelOptions& opts, int input_channels, uint64_t seed) {
  ModelConfig cfg;
  cfg.variant = variant_from_string(opts.variant);
  cfg.depth = opts.depth;
  cfg.base_channels = opts.base_channels;
  cfg.input_channels = input_channels;
  cfg.seed = seed;
  if (opts.deep_supervision == "auto")
    cfg.deep_supervision = cfg.variant == Variant::kAttnUNetMultiInput;
  else
    cfg.deep_supervision = opts.deep_supervision == "on";
  cfg.validate();
  return cfg;
}

struct TrainOptions {
  double lr = 0.01;
  double momentum = 0.9;
  double decay = 1e-6;
  int epochs = 1;
  int batch = 8;
  std::string loss = "ftl";
  double alpha = 0.7;
  double beta = 0.3;
  double gamma = 4.0 / 3.0;
  double epsilon = 1e-6;
  std::string convention = "as_printed";
  uint64_t seed = 0;
};

void add_train_options(CLI::App* sub, TrainOptions& opts) {
  sub->add_option("--lr", opts.lr, "initial learning rate");
  sub->add_option("--momentum", opts.momentum, "SGD momentum");
  sub->add_option("--decay", opts.decay, "per-epoch inverse-time lr decay");
  sub->add_option("--epochs", opts.epochs, "training epochs");
  sub->add_option("--batch", opts.batch, "mini-batch size");
  sub->add_option("--loss", opts.loss, "dl | tl | ftl")
      ->check(CLI::IsMember({"dl", "tl", "ftl"}));
  sub->add_option("--alpha", opts.alpha, "false-negative weight");
  sub->add_option("--beta", opts.beta, "false-positive weight");
  sub->add_option("--gamma", opts.gamma, "focal parameter in [1,3]");
  sub->add_option("--epsilon", opts.epsilon, "stability constant");
  sub->add_option("--convention", opts.convention,
                  "focal exponent convention: as_printed (1/gamma) | direct (gamma)")
      ->check(CLI::IsMember({"as_printed", "direct"}));
  sub->add_option("--seed", opts.seed, "run seed");
}

TrainConfig make_train_config(const TrainOptions& opts) {
  TrainConfig cfg;
  cfg.learning_rate = opts.lr;
  cfg.momentum = opts.momentum;
  cfg.decay = opts.decay;
  cfg.epochs = opts.epochs;
  cfg.batch_size = opts.batch;
  cfg.loss = loss_kind_from_string(opts.loss);
  cfg.loss_cfg.alpha = opts.alpha;
  cfg.loss_cfg.beta = opts.beta;
  cfg.loss_cfg.gamma = opts.gamma;
  cfg.loss_cfg.epsilon = opts.epsilon;
  cfg.loss_cfg.exponent_convention = opts.convention == "direct"
                                         ? ExponentConvention::kDirect
                                         : ExponentConvention::kAsPrinted;
  cfg.seed = opts.seed;
  cfg.validate();
  return cfg;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    values.push_back(std::stod(item));
  }
  if (values.empty()) throw std::invalid_argument("empty numeric list '" + text + "'");
  return values;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOptions {
  std::string preset = "bus-like";
  std::string out;
  SyntheticConfig cfg;
  CLI::App* sub = nullptr;
};

void setup_synth(CLI::App& app, SynthOptions& opts) {
  CLI::App* sub = app.add_subcommand("synth", "generate a synthetic lesion dataset");
  opts.sub = sub;
  add_flat_config(sub);
  sub->add_option("--preset", opts.preset, "bus-like | isic-like")
      ->check(CLI::IsMember({"bus-like", "isic-like"}));
  sub->add_option("--out", opts.out, "output dataset directory")->required();
  sub->add_option("--count", opts.cfg.count, "number of samples");
  sub->add_option("--height", opts.cfg.height, "image height");
  sub->add_option("--width", opts.cfg.width, "image width");
  sub->add_option("--channels", opts.cfg.channels, "1 (gray) or 3 (rgb)");
  sub->add_option("--area-lo", opts.cfg.area_lo, "lesion area fraction lower bound");
  sub->add_option("--area-hi", opts.cfg.area_hi, "lesion area fraction upper bound");
  sub->add_option("--contrast", opts.cfg.contrast, "lesion intensity offset");
  sub->add_option("--noise-sigma", opts.cfg.noise_sigma, "gaussian noise level");
  sub->add_option("--seed", opts.cfg.seed, "generator seed");
}

int run_synth(SynthOptions& opts) {
  SyntheticConfig cfg = opts.preset == "isic-like" ? isic_like_preset() : bus_like_preset();
  cfg.count = 100;
  auto keep = [&](const char* flag, auto member, auto value) {
    if (opts.sub->count(flag) > 0) cfg.*member = value;
  };
  keep("--count", &SyntheticConfig::count, opts.cfg.count);
  keep("--height", &SyntheticConfig::height, opts.cfg.height);
  keep("--width", &SyntheticConfig::width, opts.cfg.width);
  keep("--channels", &SyntheticConfig::channels, opts.cfg.channels);
  keep("--area-lo", &SyntheticConfig::area_lo, opts.cfg.area_lo);
  keep("--area-hi", &SyntheticConfig::area_hi, opts.cfg.area_hi);
  keep("--contrast", &SyntheticConfig::contrast, opts.cfg.contrast);
  keep("--noise-sigma", &SyntheticConfig::noise_sigma, opts.cfg.noise_sigma);
  keep("--seed", &SyntheticConfig::seed, opts.cfg.seed);
  cfg.validate();

  const auto samples = generate_synthetic(cfg);
  export_dataset(samples, opts.out);

  double mean = 0.0, lo = 1.0, hi = 0.0;
  for (const Sample& s : samples) {
    double fg = 0.0;
    for (double v : s.mask.data) fg += v;
    const double f = fg / static_cast<double>(s.mask.size());
    mean += f;
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  if (!samples.empty()) mean /= static_cast<double>(samples.size());

  std::ofstream manifest = open_output(fs::path(opts.out) / "manifest.txt");
  manifest << "# synthetic dataset manifest\n";
  manifest << "preset = " << opts.preset << "\n";
  manifest << "count = " << cfg.count << "\n";
  manifest << "height = " << cfg.height << "\n";
  manifest << "width = " << cfg.width << "\n";
  manifest << "channels = " << cfg.channels << "\n";
  manifest << "area_lo = " << format_fixed(cfg.area_lo) << "\n";
  manifest << "area_hi = " << format_fixed(cfg.area_hi) << "\n";
  manifest << "contrast = " << format_fixed(cfg.contrast) << "\n";
  manifest << "noise_sigma = " << format_fixed(cfg.noise_sigma) << "\n";
  manifest << "seed = " << cfg.seed << "\n";
  manifest << "foreground_mean = " << format_fixed(mean) << "\n";
  manifest << "foreground_min = " << format_fixed(lo) << "\n";
  manifest << "foreground_max = " << format_fixed(hi) << "\n";

  std::cout << "wrote " << samples.size() << " samples to " << opts.out
            << " (foreground mean " << format_fixed(mean) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainCmdOptions {
  DataOptions data;
  ModelOptions model;
  TrainOptions train;
  double val_fraction = 0.25;
  std::string out;
};

void setup_train(CLI::App& app, TrainCmdOptions& opts) {
  CLI::App* sub = app.add_subcommand("train", "train a model on a dataset directory");
  add_flat_config(sub);
  add_data_options(sub, opts.data);
  add_model_options(sub, opts.model);
  add_train_options(sub, opts.train);
  sub->add_option("--val-fraction", opts.val_fraction,
                  "held-out validation fraction (0 disables validation)")
      ->check(CLI::Range(0.0, 0.9));
  sub->add_option("--out", opts.out, "output directory (checkpoint + history.csv)")->required();
}

int run_train(TrainCmdOptions& opts) {
  const auto dataset = load_dataset(opts.data);
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  const TrainConfig train_cfg = make_train_config(opts.train);
  const ModelConfig model_cfg =
      make_model_config(opts.model, dataset[0].image.dim(0), opts.train.seed);

  std::vector<Sample> train_set, val_set;
  if (opts.val_fraction > 0.0 && dataset.size() >= 2) {
    SplitSpec spec;
    spec.train_fraction = 1.0 - opts.val_fraction;
    spec.seed = train_cfg.seed;
    SplitResult r = split(dataset, spec);
    train_set = std::move(r.train);
    val_set = std::move(r.test);
  } else {
    train_set = dataset;
  }

  Model model = Model::build(model_cfg);
  const History history = train_model(model, train_set, val_set, train_cfg);

  fs::create_directories(opts.out);
  model.save((fs::path(opts.out) / "model.ckpt").string());
  std::ofstream hist = open_output(fs::path(opts.out) / "history.csv");
  write_history_csv(hist, history);

  const double final_val = history.records.back().val_dice;
  std::cout << "final_val_dice " << format_fixed(final_val) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string checkpoint;
  DataOptions data;
  std::string out;
  double threshold = 0.5;
  bool overlays = false;
};

void setup_eval(CLI::App& app, EvalOptions& opts) {
  CLI::App* sub = app.add_subcommand("eval", "evaluate a checkpoint on a dataset directory");
  add_flat_config(sub);
  sub->add_option("--checkpoint", opts.checkpoint, "model checkpoint file")->required();
  add_data_options(sub, opts.data);
  sub->add_option("--out", opts.out, "output directory (metrics.csv, overlays)")->required();
  sub->add_option("--threshold", opts.threshold, "binarization threshold");
  sub->add_flag("--overlays", opts.overlays, "write per-image prediction/mask/diff rasters");
}

int run_eval(EvalOptions& opts) {
  Model model = Model::load(opts.checkpoint);
  const auto dataset = load_dataset(opts.data);
  if (dataset.empty()) throw std::invalid_argument("eval: dataset is empty");

  const EvalResult result = evaluate(model, dataset, opts.threshold);
  fs::create_directories(opts.out);
  std::ofstream csv = open_output(fs::path(opts.out) / "metrics.csv");
  csv << "dice,precision,recall,n_images\n";
  csv << format_fixed(result.dice) << ',' << format_fixed(result.precision) << ','
      << format_fixed(result.recall) << ',' << result.n_images << '\n';

  if (opts.overlays) {
    const fs::path overlay_dir = fs::path(opts.out) / "overlays";
    fs::create_directories(overlay_dir);
    for (const Sample& s : dataset) {
      Tensor batch({1, s.image.dim(0), s.image.dim(1), s.image.dim(2)});
      batch.data = s.image.data;
      const Tensor prob = model.predict(batch).back();
      Tensor pred({1, prob.dim(2), prob.dim(3)});
      Tensor diff = pred;
      for (int64_t i = 0; i < prob.size(); ++i) {
        const double binary = prob.data[static_cast<size_t>(i)] > opts.threshold ? 1.0 : 0.0;
        pred.data[static_cast<size_t>(i)] = prob.data[static_cast<size_t>(i)];
        diff.data[static_cast<size_t>(i)] =
            std::abs(binary - s.mask.data[static_cast<size_t>(i)]);
      }
      write_pnm((overlay_dir / (s.id + "_pred.pgm")).string(), tensor_to_image(pred));
      write_pnm((overlay_dir / (s.id + "_mask.pgm")).string(), tensor_to_image(s.mask));
      write_pnm((overlay_dir / (s.id + "_diff.pgm")).string(), tensor_to_image(diff));
    }
  }

  std::cout << "dice " << format_fixed(result.dice) << " precision "
            << format_fixed(result.precision) << " recall " << format_fixed(result.recall)
            << " n " << result.n_images << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateOptions {
  DataOptions data;
  ModelOptions model;
  TrainOptions train;
  std::string out;
  std::string rows;
  std::string grid_file;
  double train_fraction = 0.75;
  int folds = 5;
  uint64_t split_seed = 0;
  int jobs = 1;
};

void setup_ablate(CLI::App& app, AblateOptions& opts) {
  CLI::App* sub = app.add_subcommand("ablate", "run the 7-row ablation grid");
  add_flat_config(sub);
  add_data_options(sub, opts.data);
  opts.model.variant = "unet";  // per-row variants override this
  add_model_options(sub, opts.model);
  add_train_options(sub, opts.train);
  sub->add_option("--out", opts.out, "ablation table CSV")->required();
  sub->add_option("--rows", opts.rows, "comma-separated subset of the default row labels");
  sub->add_option("--grid", opts.grid_file, "custom grid file, one row per line");
  sub->add_option("--train-fraction", opts.train_fraction, "held-out split fraction");
  sub->add_option("--folds", opts.folds, "cross-validation folds");
  sub->add_option("--split-seed", opts.split_seed, "split/fold shuffle seed");
  sub->add_option("--jobs", opts.jobs, "parallel rows (results independent of jobs)")
      ->check(CLI::PositiveNumber);
}

std::vector<AblationRow> parse_grid_file(const std::string& path, const ModelConfig& base_model,
                                         const TrainConfig& base_train) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read grid file '" + path + "'");
  std::vector<AblationRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    AblationRow row;
    row.model = base_model;
    row.train = base_train;
    std::istringstream ls(line);
    std::string token;
    while (ls >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("grid file: expected key=value, got '" + token + "'");
      const std::string key = token.substr(0, eq);
      const std::string value = token.substr(eq + 1);
      if (key == "label")
        row.label = value;
      else if (key == "variant")
        row.model.variant = variant_from_string(value);
      else if (key == "loss")
        row.train.loss = loss_kind_from_string(value);
      else if (key == "alpha")
        row.train.loss_cfg.alpha = std::stod(value);
      else if (key == "beta")
        row.train.loss_cfg.beta = std::stod(value);
      else if (key == "gamma")
        row.train.loss_cfg.gamma = std::stod(value);
      else if (key == "deep_supervision")
        row.model.deep_supervision = value != "0";
      else
        throw std::invalid_argument("grid file: unknown key '" + key + "'");
    }
    if (row.label.empty()) throw std::invalid_argument("grid file: row without a label");
    row.parameters = format_loss_parameters(row.train.loss, row.train.loss_cfg);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("grid file '" + path + "' holds no rows");
  return rows;
}

int run_ablate(AblateOptions& opts) {
  const auto dataset = load_dataset(opts.data);
  if (dataset.empty()) throw std::invalid_argument("ablate: dataset is empty");
  const TrainConfig base_train = make_train_config(opts.train);
  const ModelConfig base_model =
      make_model_config(opts.model, dataset[0].image.dim(0), opts.train.seed);

  std::vector<AblationRow> grid;
  if (!opts.grid_file.empty()) {
    grid = parse_grid_file(opts.grid_file, base_model, base_train);
  } else {
    grid = default_ablation_grid(base_model, base_train);
    if (!opts.rows.empty()) {
      std::vector<AblationRow> filtered;
      std::stringstream ss(opts.rows);
      std::string label;
      while (std::getline(ss, label, ',')) {
        bool found = false;
        for (const AblationRow& row : grid) {
          if (row.label == label) {
            filtered.push_back(row);
            found = true;
            break;
          }
        }
        if (!found) throw std::invalid_argument("unknown ablation row '" + label + "'");
      }
      grid = std::move(filtered);
    }
  }

  SplitSpec spec;
  spec.train_fraction = opts.train_fraction;
  spec.folds = opts.folds;
  spec.seed = opts.split_seed;
  spec.validate();

  const auto results = run_ablation(dataset, grid, spec, base_train, opts.jobs);
  std::ofstream csv = open_output(opts.out);
  write_ablation_csv(csv, results);
  std::ostringstream echo;
  write_ablation_csv(echo, results);
  std::cout << echo.str();
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckOptions {
  std::string scope;
  uint64_t seed = 0;
  int trials = 0;  // 0: per-scope default
};

void setup_gradcheck(CLI::App& app, GradcheckOptions& opts) {
  CLI::App* sub = app.add_subcommand("gradcheck", "finite-difference verification suites");
  add_flat_config(sub);
  sub->add_option("scope", opts.scope, "losses | gate | model")
      ->required()
      ->check(CLI::IsMember({"losses", "gate", "model"}));
  sub->add_option("--seed", opts.seed, "base seed");
  sub->add_option("--trials", opts.trials, "override the per-scope trial count")
      ->check(CLI::PositiveNumber);
}

int run_gradcheck(GradcheckOptions& opts) {
  ScopeReport report;
  if (opts.scope == "losses")
    report = verify_losses(opts.seed, opts.trials > 0 ? opts.trials : 100);
  else if (opts.scope == "gate")
    report = verify_gate(opts.seed, opts.trials > 0 ? opts.trials : 100);
  else
    report = verify_model(opts.seed, opts.trials > 0 ? opts.trials : 3);

  std::cout << report.scope << " max_rel_err " << report.max_rel_err << " tol " << report.tol
            << (report.pass ? " pass" : " FAIL") << "\n";
  if (!report.pass) {
    std::cerr << "worst offender: " << report.worst << "\n";
    throw ExitWith{kExitVerification};
  }
  return 0;
}

// ---------------------------------------------------------------------------
// curve
// ---------------------------------------------------------------------------

struct CurveOptions {
  std::string gammas = "1,1.3333333333333333,2,3";
  int resolution = 100;
  std::string convention = "as_printed";
  std::string out;
};

void setup_curve(CLI::App& app, CurveOptions& opts) {
  CLI::App* sub = app.add_subcommand("curve", "tabulate the focal loss against TI");
  add_flat_config(sub);
  sub->add_option("--gammas", opts.gammas, "comma-separated gamma values in [1,3]");
  sub->add_option("--resolution", opts.resolution, "TI sampling intervals")
      ->check(CLI::PositiveNumber);
  sub->add_option("--convention", opts.convention, "as_printed | direct")
      ->check(CLI::IsMember({"as_printed", "direct"}));
  sub->add_option("--out", opts.out, "curve table CSV")->required();
}

int run_curve(CurveOptions& opts) {
  LossConfig base;
  base.exponent_convention = opts.convention == "direct" ? ExponentConvention::kDirect
                                                         : ExponentConvention::kAsPrinted;
  const auto gammas = parse_double_list(opts.gammas);
  const auto table = focal_curve(gammas, opts.resolution, base);
  std::ofstream csv = open_output(opts.out);
  csv << "ti,gamma,loss\n";
  for (const CurvePoint& pt : table)
    csv << format_fixed(pt.ti) << ',' << format_fixed(pt.gamma) << ',' << format_fixed(pt.loss)
        << '\n';
  std::cout << "wrote " << table.size() << " rows to " << opts.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"focal Tversky segmentation engine"};
  app.require_subcommand(1);

  SynthOptions synth_opts;
  TrainCmdOptions train_opts;
  EvalOptions eval_opts;
  AblateOptions ablate_opts;
  GradcheckOptions gradcheck_opts;
  CurveOptions curve_opts;

  setup_synth(app, synth_opts);
  setup_train(app, train_opts);
  setup_eval(app, eval_opts);
  setup_ablate(app, ablate_opts);
  setup_gradcheck(app, gradcheck_opts);
  setup_curve(app, curve_opts);

  try {
    std::vector<std::string> args = expand_config_args(argc, argv);
    std::reverse(args.begin(), args.end());  // CLI11's vector parse order
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (app.got_subcommand("synth")) return run_synth(synth_opts);
    if (app.got_subcommand("train")) return run_train(train_opts);
    if (app.got_subcommand("eval")) return run_eval(eval_opts);
    if (app.got_subcommand("ablate")) return run_ablate(ablate_opts);
    if (app.got_subcommand("gradcheck")) return run_gradcheck(gradcheck_opts);
    if (app.got_subcommand("curve")) return run_curve(curve_opts);
  } catch (const ExitWith& e) {
    return e.code;
  } catch (const TrainAbortError& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return kExitTrainFailure;
  } catch (const IncompatibleError& e) {
    std::cerr << "incompatible inputs: " << e.what() << "\n";
    return kExitIncompatible;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
