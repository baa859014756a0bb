// Copyright Contributors to the geoni project
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "geoni/checkpoint.hpp"
#include "geoni/eval.hpp"
#include "geoni/rng.hpp"
#include "geoni/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace geoni;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

uint64_t resolve_seed(uint64_t config_seed) {
  if (const char* env = std::getenv("GEONI_SEED")) return std::strtoull(env, nullptr, 10);
  return config_seed;
}

void write_run_echo(const std::string& path, const json& config) {
  fs::create_directories(fs::path(path).parent_path().empty()
                             ? fs::path(".")
                             : fs::path(path).parent_path());
  std::ofstream out(path);
  out << config.dump(2) << "\n";
}

// (s, t) grid positions occupied by the inputs of an alpha-fold upsampling.
std::vector<std::pair<int, int>> input_grid_positions(const LightField4D& lf, int alpha) {
  std::vector<std::pair<int, int>> pos;
  for (int s = 0; s < lf.angular_s(); ++s)
    for (int t = 0; t < lf.angular_t(); ++t) {
      const bool s_in = lf.angular_s() == 1 || s % alpha == 0;
      const bool t_in = lf.angular_t() == 1 || t % alpha == 0;
      if (s_in && t_in) pos.emplace_back(s, t);
    }
  return pos;
}

int run_train(const std::string& config_path) {
  std::ifstream in(config_path);
  GEONI_REQUIRE(in.good(), "cannot read config " + config_path);
  json doc = json::parse(in);

  TrainConfig cfg;
  cfg.alpha = doc.value("alpha", cfg.alpha);
  if (doc.contains("shears")) {
    if (doc["shears"].is_string())
      cfg.hypotheses = ShearHypothesisSet::parse(doc["shears"].get<std::string>());
    else
      cfg.hypotheses = ShearHypothesisSet(doc["shears"].get<std::vector<double>>());
  }
  cfg.input_views = doc.value("input_views", cfg.input_views);
  cfg.learning_rate = doc.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = doc.value("batch_size", cfg.batch_size);
  cfg.epochs = doc.value("epochs", cfg.epochs);
  cfg.max_steps = doc.value("max_steps", cfg.max_steps);
  cfg.patch_width = doc.value("patch_width", cfg.patch_width);
  cfg.patch_height = doc.value("patch_height", cfg.patch_height);
  cfg.patch_stride = doc.value("patch_stride", cfg.patch_stride);
  if (doc.contains("augment_shears"))
    cfg.augment_shears = doc["augment_shears"].get<std::vector<double>>();
  cfg.checkpoint_every = doc.value("checkpoint_every", cfg.checkpoint_every);
  cfg.pretrain_ni_epochs = doc.value("pretrain_ni_epochs", cfg.pretrain_ni_epochs);
  cfg.seed = resolve_seed(doc.value("seed", cfg.seed));

  const std::vector<std::string> dirs = doc.at("data_dirs").get<std::vector<std::string>>();
  const std::string out_dir = doc.at("out_dir").get<std::string>();

  NiNetworkSpec ni_spec;
  ni_spec.alpha = cfg.alpha;
  ni_spec.base_channels = doc.value("base_channels", ni_spec.base_channels);
  DibrNetworkSpec dibr_spec;
  dibr_spec.base_channels = doc.value("dibr_base_channels", dibr_spec.base_channels);

  NiNetwork ni = doc.contains("init_ni") ? load_ni_checkpoint(doc["init_ni"].get<std::string>())
                                         : make_ni_network(ni_spec, cfg.seed);
  DibrNetwork dibr = doc.contains("init_dibr")
                         ? load_dibr_checkpoint(doc["init_dibr"].get<std::string>())
                         : make_dibr_network(dibr_spec, hash_combine(cfg.seed, 2));
  GEONI_REQUIRE(ni.spec.alpha == cfg.alpha, "NI checkpoint alpha differs from config");

  fs::create_directories(out_dir);
  json echo = doc;
  echo["resolved_seed"] = cfg.seed;
  write_run_echo((fs::path(out_dir) / "run.json").string(), echo);

  Dataset ds = build_dataset(dirs, cfg);
  TrainResult res = train(cfg, ds, ni, dibr, out_dir);
  std::cout << "steps=" << res.steps << " final_loss=" << res.final_loss
            << " best_val_psnr=" << res.best_val_psnr << "\n"
            << "checkpoints: " << res.last_checkpoint_ni << " " << res.last_checkpoint_dibr
            << "\n";
  return kExitOk;
}

struct InferArgs {
  std::string in_dir, out_dir;
  int alpha = 0;
  std::string shears = "-8,-4,0,4,8";
  int cascade = 1;
  std::string ni_path, dibr_path;
  bool bilinear = false;
  uint64_t seed = 0;
};

json echo_of(const InferArgs& a, const std::string& mode) {
  json e;
  e["mode"] = mode;
  e["in"] = a.in_dir;
  e["out"] = a.out_dir;
  e["alpha"] = a.alpha;
  e["shears"] = a.shears;
  e["cascade"] = a.cascade;
  e["ni"] = a.ni_path;
  e["dibr"] = a.dibr_path;
  e["bilinear"] = a.bilinear;
  e["resolved_seed"] = resolve_seed(a.seed);
  return e;
}

int run_reconstruct(const InferArgs& a) {
  std::optional<NiNetwork> ni;
  std::optional<DibrNetwork> dibr;
  if (!a.ni_path.empty()) ni = load_ni_checkpoint(a.ni_path);
  if (!a.dibr_path.empty()) dibr = load_dibr_checkpoint(a.dibr_path);
  GEONI_REQUIRE(ni || a.bilinear, "reconstruct needs --ni or --bilinear");

  PipelineConfig cfg;
  cfg.alpha = ni ? ni->spec.alpha : a.alpha;
  cfg.ni_mode = a.bilinear ? NiMode::Bilinear : NiMode::Learned;
  if (a.alpha > 0 && ni)
    GEONI_REQUIRE(a.alpha == ni->spec.alpha, "--alpha differs from the NI checkpoint");
  GEONI_REQUIRE(cfg.alpha >= 2, "alpha must be >= 2");

  ShearHypothesisSet D = ShearHypothesisSet::parse(a.shears);
  LightField4D lf = load_lightfield(a.in_dir);

  for (int k = 0; k < a.cascade; ++k) {
    ShearHypothesisSet Dk = [&] {
      std::vector<double> v = D.values;
      for (double& d : v) d /= std::pow(cfg.alpha, k);
      return ShearHypothesisSet(v);
    }();
    if (lf.color_space == "rgb")
      lf = reconstruct_4d_rgb(lf, Dk, ni ? &*ni : nullptr, dibr ? &*dibr : nullptr, cfg);
    else
      lf = reconstruct_4d(lf, Dk, ni ? &*ni : nullptr, dibr ? &*dibr : nullptr, cfg);
  }

  save_lightfield(a.out_dir, lf);
  write_run_echo((fs::path(a.out_dir) / "run.json").string(), echo_of(a, "reconstruct"));
  std::cout << "wrote " << lf.angular_s() * lf.angular_t() << " views to " << a.out_dir << "\n";
  return kExitOk;
}

int run_depth(const InferArgs& a, bool filter, int t_index) {
  std::optional<NiNetwork> ni;
  std::optional<DibrNetwork> dibr;
  if (!a.ni_path.empty()) ni = load_ni_checkpoint(a.ni_path);
  if (!a.dibr_path.empty()) dibr = load_dibr_checkpoint(a.dibr_path);
  GEONI_REQUIRE(dibr.has_value(), "depth needs --dibr");
  GEONI_REQUIRE(ni || a.bilinear, "depth needs --ni or --bilinear");

  PipelineConfig cfg;
  cfg.alpha = ni ? ni->spec.alpha : a.alpha;
  cfg.ni_mode = a.bilinear ? NiMode::Bilinear : NiMode::Learned;
  GEONI_REQUIRE(cfg.alpha >= 2, "alpha must be >= 2");

  ShearHypothesisSet D = ShearHypothesisSet::parse(a.shears);
  LightField4D lf = to_luminance(load_lightfield(a.in_dir));
  GEONI_REQUIRE(t_index >= 0 && t_index < lf.angular_t(), "--t-index out of range");

  std::vector<LightFieldSlice> slices = extract_slices(lf, SliceAxis::S);
  ReconstructResult r =
      reconstruct_slice(slices[static_cast<size_t>(t_index)], D, ni ? &*ni : nullptr, &*dibr, cfg);
  ReconstructionCostVolume costs = r.costs;
  if (filter) costs = filter_cost_volume(costs, r.slice);
  DepthVolume depth = render_depth(costs, D, r.stack.masks);

  save_depth_volume(a.out_dir, depth, t_index);
  json echo = echo_of(a, "depth");
  echo["filter"] = filter;
  echo["t_index"] = t_index;
  write_run_echo((fs::path(a.out_dir) / "run.json").string(), echo);
  std::cout << "wrote " << depth.values.dim(2) << " depth maps to " << a.out_dir << "\n";
  return kExitOk;
}

int run_eval(const std::string& recon_dir, const std::string& truth_dir, bool exclude_inputs,
             int alpha, const std::string& out_csv) {
  LightField4D recon = load_lightfield(recon_dir);
  LightField4D truth = load_lightfield(truth_dir);
  std::vector<std::pair<int, int>> inputs;
  if (exclude_inputs) {
    GEONI_REQUIRE(alpha >= 2, "--exclude-inputs needs --alpha");
    inputs = input_grid_positions(recon, alpha);
  }
  EvalReport report;
  report.entries.push_back(
      evaluate(recon, truth, inputs, fs::path(recon_dir).filename().string(), alpha));
  const EvalEntry& e = report.entries.front();
  std::cout << "psnr_db=" << (std::isinf(e.psnr_db) ? "inf" : std::to_string(e.psnr_db))
            << " ssim=" << e.ssim << "\n";
  if (!out_csv.empty()) {
    write_csv(report, out_csv);
    json echo;
    echo["mode"] = "eval";
    echo["recon"] = recon_dir;
    echo["truth"] = truth_dir;
    echo["alpha"] = alpha;
    echo["exclude_inputs"] = exclude_inputs;
    write_run_echo(out_csv + ".run.json", echo);
  }
  return kExitOk;
}

int run_sweep(const InferArgs& a, const std::string& truth_dir, const std::string& ranges_text,
              double step, const std::string& out_csv) {
  std::optional<NiNetwork> ni;
  std::optional<DibrNetwork> dibr;
  if (!a.ni_path.empty()) ni = load_ni_checkpoint(a.ni_path);
  if (!a.dibr_path.empty()) dibr = load_dibr_checkpoint(a.dibr_path);

  PipelineConfig cfg;
  cfg.alpha = ni ? ni->spec.alpha : a.alpha;
  cfg.ni_mode = a.bilinear || !ni ? NiMode::Bilinear : NiMode::Learned;
  GEONI_REQUIRE(cfg.alpha >= 2, "alpha must be >= 2");

  std::vector<std::pair<double, double>> ranges;
  {
    std::stringstream ss(ranges_text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const double r = std::stod(item);
      GEONI_REQUIRE(r > 0.0, "sweep ranges must be positive half-widths");
      ranges.emplace_back(-r, r);
    }
  }
  GEONI_REQUIRE(!ranges.empty(), "no sweep ranges given");

  LightField4D truth = to_luminance(load_lightfield(truth_dir));
  LightFieldSlice truth_slice = extract_slices(truth, SliceAxis::S).front();
  const int A_out = truth_slice.angular();
  GEONI_REQUIRE((A_out - 1) % cfg.alpha == 0, "truth view count does not match alpha grid");

  LightFieldSlice input;
  const int A_in = (A_out - 1) / cfg.alpha + 1;
  input.data = Tensor({truth_slice.width(), truth_slice.height(), A_in, 1});
  for (int x = 0; x < truth_slice.width(); ++x)
    for (int y = 0; y < truth_slice.height(); ++y)
      for (int i = 0; i < A_in; ++i)
        input.data(x, y, i, 0) = truth_slice.data(x, y, i * cfg.alpha, 0);

  std::vector<SweepPoint> points = sweep_shear_range(
      input, truth_slice, ranges, ni ? &*ni : nullptr, dibr ? &*dibr : nullptr, cfg, step);
  write_sweep_csv(points, out_csv);
  json echo = echo_of(a, "sweep");
  echo["truth"] = truth_dir;
  echo["ranges"] = ranges_text;
  echo["step"] = step;
  write_run_echo(out_csv + ".run.json", echo);
  for (const SweepPoint& p : points)
    std::cout << "[" << p.lo << "," << p.hi << "] psnr_db=" << p.psnr_db << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Light-field angular super-resolution with sheared neural interpolation"};
  app.require_subcommand(1);

  std::string train_config;
  CLI::App* sc_train = app.add_subcommand("train", "Optimize the networks from a JSON config");
  sc_train->add_option("--config", train_config, "JSON training config")->required();

  InferArgs ra;
  CLI::App* sc_rec = app.add_subcommand("reconstruct", "Angular upsampling of a light field");
  sc_rec->add_option("--in", ra.in_dir)->required();
  sc_rec->add_option("--out", ra.out_dir)->required();
  sc_rec->add_option("--alpha", ra.alpha);
  sc_rec->add_option("--shears", ra.shears);
  sc_rec->add_option("--cascade", ra.cascade);
  sc_rec->add_option("--ni", ra.ni_path);
  sc_rec->add_option("--dibr", ra.dibr_path);
  sc_rec->add_flag("--bilinear", ra.bilinear);

  InferArgs da;
  bool depth_filter = false;
  int depth_t_index = 0;
  CLI::App* sc_depth = app.add_subcommand("depth", "Byproduct depth from the cost volume");
  sc_depth->add_option("--in", da.in_dir)->required();
  sc_depth->add_option("--out", da.out_dir)->required();
  sc_depth->add_option("--alpha", da.alpha);
  sc_depth->add_option("--shears", da.shears);
  sc_depth->add_option("--ni", da.ni_path);
  sc_depth->add_option("--dibr", da.dibr_path);
  sc_depth->add_flag("--bilinear", da.bilinear);
  sc_depth->add_flag("--filter", depth_filter, "Guided smoothing of the cost volume");
  sc_depth->add_option("--t-index", depth_t_index);

  std::string ev_recon, ev_truth, ev_csv;
  bool ev_exclude = false;
  int ev_alpha = 0;
  CLI::App* sc_eval = app.add_subcommand("eval", "Score a reconstruction against ground truth");
  sc_eval->add_option("--recon", ev_recon)->required();
  sc_eval->add_option("--truth", ev_truth)->required();
  sc_eval->add_flag("--exclude-inputs", ev_exclude);
  sc_eval->add_option("--alpha", ev_alpha);
  sc_eval->add_option("--out", ev_csv);

  InferArgs sa;
  std::string sw_truth, sw_ranges, sw_csv = "sweep.csv";
  double sw_step = 4.0;
  CLI::App* sc_sweep = app.add_subcommand("sweep", "PSNR vs. shear-range table");
  sc_sweep->add_option("--truth", sw_truth)->required();
  sc_sweep->add_option("--ranges", sw_ranges)->required();
  sc_sweep->add_option("--step", sw_step);
  sc_sweep->add_option("--alpha", sa.alpha);
  sc_sweep->add_option("--ni", sa.ni_path);
  sc_sweep->add_option("--dibr", sa.dibr_path);
  sc_sweep->add_flag("--bilinear", sa.bilinear);
  sc_sweep->add_option("--out", sw_csv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return kExitConfig;
  }

  try {
    if (*sc_train) return run_train(train_config);
    if (*sc_rec) return run_reconstruct(ra);
    if (*sc_depth) return run_depth(da, depth_filter, depth_t_index);
    if (*sc_eval) return run_eval(ev_recon, ev_truth, ev_exclude, ev_alpha, ev_csv);
    if (*sc_sweep) return run_sweep(sa, sw_truth, sw_ranges, sw_step, sw_csv);
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\nlast good checkpoint: " << e.last_good_checkpoint
              << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
