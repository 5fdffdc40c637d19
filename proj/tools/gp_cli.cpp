// Command-line front end: dataset generation, particle construction, training,
// sampling, editing, recovery, interpolation, evaluation, gradient checks and
// the HTTP job service.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "gp/dps.hpp"
#include "gp/interpolation.hpp"
#include "gp/metrics.hpp"
#include "gp/recovery.hpp"
#include "gp/service.hpp"
#include "gp/synthetic.hpp"

namespace fs = std::filesystem;
using namespace gp;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
};

std::string data_root() {
  const char* env = std::getenv("GP_DATA_DIR");
  return env && *env ? env : "gp_data";
}

std::string out_or(const Globals& g, const std::string& fallback) {
  return g.out.empty() ? fallback : g.out;
}

void emit(const Globals& g, const nlohmann::json& j) {
  if (g.out.empty())
    std::cout << j.dump(1) << '\n';
  else
    write_json_file(g.out, j);
}

std::vector<int> parse_cond(const std::string& cond) {
  if (cond.empty() || cond == "none") return null_label_tokens();
  if (std::all_of(cond.begin(), cond.end(), ::isdigit)) {
    const int label = std::stoi(cond);
    if (label > kNullLabel) throw ValidationError("label must lie in [0, " + std::to_string(kNullLabel) + "]");
    return label_tokens(label);
  }
  return label_tokens(static_cast<int>(family_from_name(cond)));
}

std::vector<fs::path> json_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ValidationError(dir + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

// Loads a dataset, optionally keeping only the listed families.
Dataset load_filtered(const std::string& dir, const std::vector<std::string>& families) {
  Dataset d = load_dataset(dir);
  if (families.empty()) return d;
  std::vector<Family> keep;
  for (const auto& f : families) keep.push_back(family_from_name(f));
  std::erase_if(d.samples, [&](const DatasetSample& s) {
    return std::find(keep.begin(), keep.end(), s.family) == keep.end();
  });
  if (d.samples.empty()) throw ValidationError("no samples of the requested families in " + dir);
  return d;
}

Camera parse_camera(const std::string& arg) {
  if (arg == "front") return Camera::front();
  if (arg == "side") return Camera::side();
  if (arg == "top") return Camera::top();
  if (!fs::exists(arg)) throw ValidationError("camera must be front, side, top or a JSON file");
  return Camera::from_json(read_json_file(arg));
}

std::unique_ptr<PatternModel> load_pattern_model(const std::string& path, PatternModelKind kind) {
  auto m = std::make_unique<PatternModel>(PatternModel::load(path));
  if (m->kind() != kind) throw ValidationError(path + " holds the other pattern-model variant");
  return m;
}

SewingPattern recover_one(const std::string& variant, const PatternModel* model, const GarmentParticles& x,
                          int steps, std::uint64_t seed) {
  if (variant == "delaunay") {
    SewingPattern p = recover_delaunay(x);
    p.stitches = infer_stitches(p, x);
    return p;
  }
  if (!model) throw ValidationError("--model is required for variant " + variant);
  return variant == "flow" ? ppf_sample(*model, x, steps, seed) : recover_regression(*model, x);
}

// Central-difference check of a point-set objective's gradient w.r.t. its first argument.
double distance_gradcheck(const std::function<PointSetDistanceResult(const PointSet&)>& f, const PointSet& a) {
  const Mat g = *f(a).gradient;
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    PointSet ap = a, am = a;
    ap.data()[i] += h;
    am.data()[i] -= h;
    const double fd = (f(ap).value - f(am).value) / (2 * h);
    const double an = g.data()[i];
    worst = std::max(worst, std::abs(an - fd) / std::max(std::abs(an) + std::abs(fd), 1e-8));
  }
  return worst;
}

TransformerConfig tiny_config() {
  TransformerConfig c;
  c.width = 8;
  c.depth = 1;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.time_dim = 8;
  return c;
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Garment particles toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  app.set_config("--config", "", "key = value file supplying option defaults");
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->default_val(0);
  app.add_option("--out", g.out, "Output file or directory");

  // dataset gen
  auto* dataset = app.add_subcommand("dataset", "Synthetic dataset tools");
  dataset->require_subcommand(1);
  auto* dgen = dataset->add_subcommand("gen", "Generate a synthetic dataset");
  DatasetSpec spec;
  std::vector<double> weights;
  std::string dname = "synthetic";
  dgen->add_option("--n", spec.n_garments, "Number of garments")->required()->check(CLI::PositiveNumber);
  dgen->add_option("--weights", weights, "Family weights (4 values)")->expected(kFamilyCount);
  dgen->add_option("--area-per-point", spec.area_per_point, "Sampling area per particle (cm^2)");
  dgen->add_option("--n-max", spec.n_max, "Particle cap");
  dgen->add_option("--name", dname, "Dataset name under GP_DATA_DIR/datasets");

  // build
  auto* build = app.add_subcommand("build", "Build particles from garment JSON files");
  std::string build_in;
  double build_area = 40.0;
  build->add_option("--in", build_in, "Directory of garment JSON files")->required()->check(CLI::ExistingDirectory);
  build->add_option("--area-per-point", build_area, "Sampling area per particle (cm^2)");

  // train
  auto* train = app.add_subcommand("train", "Train a generative or pattern-recovery model");
  std::string train_kind = "flow", train_data;
  std::vector<std::string> train_families;
  int width = 64, depth = 2, heads = 4, iters = 1000, batch = 4;
  double lr = 2e-3, label_dropout = 0.1, noise_level = 0.0;
  bool no_ot = false;
  train->add_option("--kind", train_kind, "flow, ppf or regression")
      ->check(CLI::IsMember({"flow", "ppf", "regression"}));
  train->add_option("--data", train_data, "Dataset directory");
  train->add_option("--families", train_families, "Restrict training to these families");
  train->add_option("--width", width)->check(CLI::PositiveNumber);
  train->add_option("--depth", depth)->check(CLI::PositiveNumber);
  train->add_option("--heads", heads)->check(CLI::PositiveNumber);
  train->add_option("--iters", iters)->check(CLI::PositiveNumber);
  train->add_option("--batch", batch)->check(CLI::PositiveNumber);
  train->add_option("--lr", lr)->check(CLI::PositiveNumber);
  train->add_option("--label-dropout", label_dropout)->check(CLI::Range(0.0, 1.0));
  train->add_option("--noise-level", noise_level, "Pattern noise on training particles (pattern models)");
  train->add_flag("--no-ot", no_ot, "Pair noise and data rows independently");

  // sample
  auto* samp = app.add_subcommand("sample", "Unguided sampling");
  std::string model_path, cond;
  int n = 128, steps = 100, count = 1;
  samp->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  samp->add_option("--n", n, "Particle count")->check(CLI::PositiveNumber);
  samp->add_option("--cond", cond, "Family name or label index");
  samp->add_option("--steps", steps, "Euler steps")->check(CLI::PositiveNumber);
  samp->add_option("--count", count, "Number of samples (seeds seed..seed+count-1)")->check(CLI::PositiveNumber);

  // dps
  auto* dps = app.add_subcommand("dps", "Objective-guided editing");
  std::string task, observation, camera, request_file, trace_file;
  DpsConfig hyper;
  std::optional<double> eta;
  std::optional<int> opt_n;
  dps->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  dps->add_option("--request", request_file, "EditRequest JSON (other flags override)")->check(CLI::ExistingFile);
  dps->add_option("--task", task, "pointcloud, completion, pattern_edit, pattern_completion or silhouette");
  dps->add_option("--observation", observation, "Point-set JSON file")->check(CLI::ExistingFile);
  dps->add_option("--camera", camera, "front, side, top or a camera JSON file");
  dps->add_option("--cond", cond, "Family name or label index");
  dps->add_option("--T", hyper.T, "Denoising steps");
  dps->add_option("--stop-t", hyper.stop_t, "Guidance stops after this time");
  dps->add_option("--eta", eta, "Inner step size");
  dps->add_option("--opt-n", opt_n, "Inner optimization steps");
  dps->add_option("--n", hyper.N, "Particle count (0: observation size)");
  dps->add_option("--trace", trace_file, "Write the per-step trace as JSON lines");

  // recover
  auto* rec = app.add_subcommand("recover", "Recover a sewing pattern from particles");
  std::string rec_in, variant = "delaunay";
  double rec_noise = 0.0;
  rec->add_option("--in", rec_in, "Particles JSON")->required()->check(CLI::ExistingFile);
  rec->add_option("--variant", variant)->check(CLI::IsMember({"delaunay", "flow", "regression"}));
  rec->add_option("--model", model_path, "Pattern model (flow or regression variant)")->check(CLI::ExistingFile);
  rec->add_option("--steps", steps, "Euler steps (flow variant)")->check(CLI::PositiveNumber);
  rec->add_option("--noise", rec_noise, "Pattern noise level added before recovery");

  // interpolate
  auto* interp = app.add_subcommand("interpolate", "Interpolate between two seeded samples");
  std::uint64_t seed_a = 0, seed_b = 1;
  int count_a = 128, count_b = 128, interp_steps = 11, timesteps = 5;
  interp->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  interp->add_option("--a", seed_a, "First endpoint seed")->required();
  interp->add_option("--b", seed_b, "Second endpoint seed")->required();
  interp->add_option("--count-a", count_a)->check(CLI::PositiveNumber);
  interp->add_option("--count-b", count_b)->check(CLI::PositiveNumber);
  interp->add_option("--steps", interp_steps, "Number of s values in [0, 1]")->check(CLI::Range(2, 1000));
  interp->add_option("--timesteps", timesteps, "Correspondence timesteps")->check(CLI::PositiveNumber);
  interp->add_option("--T", steps, "Euler steps")->check(CLI::PositiveNumber);
  interp->add_option("--cond", cond, "Family name or label index");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Evaluation harnesses");
  eval->require_subcommand(1);
  auto* eval_gen = eval->add_subcommand("generation", "COV, MMD and 1-NNA of generated particles");
  std::string gen_dir, ref_dir, ref_family;
  int surface_points = kSurfaceSamples;
  eval_gen->add_option("--gen", gen_dir, "Directory of particle JSON files")->required()->check(CLI::ExistingDirectory);
  eval_gen->add_option("--ref", ref_dir, "Reference dataset directory")->required()->check(CLI::ExistingDirectory);
  eval_gen->add_option("--family", ref_family, "Restrict references to one family");
  eval_gen->add_option("--points", surface_points, "Surface samples per cloud")->check(CLI::PositiveNumber);
  auto* eval_rec = eval->add_subcommand("recovery", "Panel accuracy, IOU and stitch accuracy");
  std::string eval_data;
  int limit = 0;
  eval_rec->add_option("--data", eval_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval_rec->add_option("--variant", variant)->check(CLI::IsMember({"delaunay", "flow", "regression"}));
  eval_rec->add_option("--model", model_path, "Pattern model")->check(CLI::ExistingFile);
  eval_rec->add_option("--noise", rec_noise, "Pattern noise level");
  eval_rec->add_option("--steps", steps, "Euler steps (flow variant)")->check(CLI::PositiveNumber);
  eval_rec->add_option("--limit", limit, "Evaluate only the first samples");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks at tiny scale");
  std::string gc_target = "all";
  double gc_tol = 1e-4;
  gc->add_option("--target", gc_target)->check(CLI::IsMember({"all", "flow", "ppf", "emd", "chamfer"}));
  gc->add_option("--tol", gc_tol, "Relative error tolerance");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP job service");
  ServiceConfig svc_cfg;
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host);
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve->add_option("--flow-model", svc_cfg.flow_model)->check(CLI::ExistingFile);
  serve->add_option("--ppf-model", svc_cfg.ppf_model)->check(CLI::ExistingFile);
  serve->add_option("--regression-model", svc_cfg.regression_model)->check(CLI::ExistingFile);
  serve->add_option("--queue", svc_cfg.queue_capacity, "Queued plus running job cap")->check(CLI::PositiveNumber);
  serve->add_option("--workers", svc_cfg.workers)->check(CLI::PositiveNumber);
  serve->add_option("--default-steps", svc_cfg.default_steps)->check(CLI::PositiveNumber);
  std::string service_config;
  serve->add_option("--service-config", service_config, "key = value file; flags given here take precedence")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (e.get_exit_code() != 0) std::cerr << app.help();
    return 1;
  }

  try {
    if (dgen->parsed()) {
      spec.seed = g.seed;
      if (!weights.empty()) std::copy(weights.begin(), weights.end(), spec.weights.begin());
      spec.validate();
      const std::string dir = out_or(g, (fs::path(data_root()) / "datasets" / dname).string());
      const Dataset d = generate_dataset(spec);
      write_dataset(d, dir);
      std::cout << nlohmann::json{{"dir", dir}, {"samples", d.samples.size()}, {"filtered", d.filtered.size()}}.dump()
                << '\n';
    } else if (build->parsed()) {
      const std::string dir = out_or(g, (fs::path(data_root()) / "built").string());
      int built = 0;
      for (const auto& file : json_files(build_in)) {
        const nlohmann::json in = read_json_file(file.string());
        const Family fam = family_from_name(in.at("family").get<std::string>());
        const std::uint64_t s = in.value("seed", g.seed);
        ParametricGarment garment =
            generate_garment(fam, in.value("params", GarmentParams{}), s);
        if (in.contains("panels")) {
          // Explicit panels replace the generated ones by id; the drape stays analytic.
          std::vector<PanelPolygon> given;
          for (const auto& p : in.at("panels")) given.push_back(PanelPolygon::from_json(p));
          validate_panel_tree(given);
          if (given.size() != garment.panels.size())
            throw ValidationError(file.string() + ": panel count differs from the family's");
          for (auto& p : garment.panels) {
            auto it = std::find_if(given.begin(), given.end(), [&](const auto& q) { return q.id == p.id; });
            if (it == given.end()) throw ValidationError(file.string() + ": missing panel " + p.id);
            p = *it;
          }
        }
        const PackingResult packed = pack_garment(garment);
        if (!packed.success) throw RuntimeFailure(file.string() + ": packing failed: " + packed.failure);
        const GarmentParticles x = build_particles(garment, build_area);
        const fs::path od = fs::path(dir) / file.stem();
        write_json_file((od / "particles.json").string(), x.to_json());
        write_json_file((od / "pattern.json").string(), pattern_from_garment(garment).to_json());
        ++built;
      }
      std::cout << nlohmann::json{{"dir", dir}, {"built", built}}.dump() << '\n';
    } else if (train->parsed()) {
      const std::string data = train_data.empty() ? (fs::path(data_root()) / "datasets" / "synthetic").string()
                                                  : train_data;
      const Dataset d = load_filtered(data, train_families);
      const std::string out = out_or(g, (fs::path(data_root()) / "models" / (train_kind + ".ckpt")).string());
      if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
      auto report = [&](int it, double loss) {
        if (it % std::max(1, iters / 10) == 0) std::cerr << "iter " << it << " loss " << loss << '\n';
      };
      FlowTrainResult r;
      nlohmann::json info{{"dataset", data}, {"samples", d.samples.size()}, {"iters", iters}, {"seed", g.seed}};
      if (train_kind == "flow") {
        TransformerConfig c;
        c.width = width;
        c.depth = depth;
        c.heads = heads;
        c.cond_vocab = kCondTokens * (kFamilyCount + 1);
        FlowModel m(c, d.spec.n_max, g.seed);
        std::vector<FlowItem> items;
        for (const auto& s : d.samples) items.push_back({s.particles.as_channels(), s.label_tokens});
        FlowTrainConfig tc;
        tc.batch = batch;
        tc.lr = lr;
        tc.iters = iters;
        tc.seed = derive_seed(g.seed, 0x7a1);
        tc.label_dropout = label_dropout;
        tc.ot_pairing = !no_ot;
        tc.null_tokens = null_label_tokens();
        r = train_flow(m, items, tc, report);
        info["zero_init_loss"] = r.zero_init_loss;
        info["final_loss"] = r.final_loss;
        m.info() = info;
        m.save(out);
      } else {
        const PatternDims dims;
        const auto kind = train_kind == "ppf" ? PatternModelKind::Flow : PatternModelKind::Regression;
        PatternModel m(kind, PatternModel::default_config(dims, width, depth, heads), dims, g.seed);
        std::vector<PatternTrainItem> items;
        for (const auto& s : d.samples) items.push_back({s.particles, encode_pattern(s.pattern, dims)});
        PatternTrainConfig tc;
        tc.batch = batch;
        tc.lr = lr;
        tc.iters = iters;
        tc.seed = derive_seed(g.seed, 0x7a2);
        tc.noise_level = noise_level;
        r = train_pattern_model(m, items, tc, report);
        info["zero_init_loss"] = r.zero_init_loss;
        info["final_loss"] = r.final_loss;
        m.info() = info;
        m.save(out);
      }
      write_json_file(out + ".losses.json", r.losses);
      std::cout << nlohmann::json{{"model", out},
                                  {"zero_init_loss", r.zero_init_loss},
                                  {"final_loss", r.final_loss},
                                  {"ratio", r.final_loss / r.zero_init_loss}}
                       .dump()
                << '\n';
    } else if (samp->parsed()) {
      const FlowModel m = FlowModel::load(model_path);
      if (n > m.n_max()) throw ValidationError("--n exceeds the model's n_max");
      const auto tokens = parse_cond(cond);
      if (count == 1) {
        emit(g, sample(m, n, tokens, steps, g.seed).to_json());
      } else {
        const std::string dir = out_or(g, (fs::path(data_root()) / "samples").string());
        for (int k = 0; k < count; ++k) {
          char name[32];
          std::snprintf(name, sizeof name, "sample_%04d.json", k);
          write_json_file((fs::path(dir) / name).string(), sample(m, n, tokens, steps, g.seed + k).to_json());
        }
      }
    } else if (dps->parsed()) {
      const FlowModel m = FlowModel::load(model_path);
      nlohmann::json req = request_file.empty() ? nlohmann::json::object() : read_json_file(request_file);
      nlohmann::json h = req.value("hyper", nlohmann::json::object());
      if (!task.empty()) req["task"] = task;
      if (!observation.empty()) req["observation"] = observation;
      if (!camera.empty()) req["camera"] = parse_camera(camera).to_json();
      if (!cond.empty()) req["cond"] = parse_cond(cond);
      if (!req.contains("task")) throw ValidationError("--task is required");
      if (!req.contains("observation")) throw ValidationError("--observation is required");
      if (dps->count("--T")) h["T"] = hyper.T;
      if (dps->count("--stop-t")) h["stop_t"] = hyper.stop_t;
      if (dps->count("--n")) h["N"] = hyper.N;
      if (eta) h["eta"] = *eta;
      if (opt_n) h["opt_n"] = *opt_n;
      if (app.count("--seed") || !h.contains("seed")) h["seed"] = g.seed;
      req["hyper"] = h;
      const EditRequest r = EditRequest::from_json(req);
      std::unique_ptr<std::ofstream> trace;
      if (!trace_file.empty()) trace = std::make_unique<std::ofstream>(trace_file);
      const DpsResult out = dps_sample(m, r, [&](const DpsTraceEntry& e) {
        if (trace) *trace << e.to_json().dump() << '\n';
      });
      emit(g, out.particles.to_json());
      std::cerr << "final objective " << out.final_objective << '\n';
    } else if (rec->parsed()) {
      std::unique_ptr<PatternModel> model;
      if (variant != "delaunay") {
        if (model_path.empty()) throw ValidationError("--model is required for variant " + variant);
        model = load_pattern_model(model_path, variant == "flow" ? PatternModelKind::Flow : PatternModelKind::Regression);
      }
      GarmentParticles x = GarmentParticles::from_json(read_json_file(rec_in));
      x.validate(std::numeric_limits<int>::max());
      if (rec_noise > 0) x = add_pattern_noise(x, rec_noise, g.seed);
      emit(g, recover_one(variant, model.get(), x, steps, g.seed).to_json());
    } else if (interp->parsed()) {
      const FlowModel m = FlowModel::load(model_path);
      if (std::max(count_a, count_b) > m.n_max()) throw ValidationError("counts exceed the model's n_max");
      const InterpolationPath path = make_path(m, seed_a, count_a, seed_b, count_b, parse_cond(cond), timesteps, steps);
      const std::string dir = out_or(g, (fs::path(data_root()) / "interpolation").string());
      nlohmann::json index = nlohmann::json::array();
      for (int k = 0; k < interp_steps; ++k) {
        const double s = k == interp_steps - 1 ? 1.0 : static_cast<double>(k) / (interp_steps - 1);
        char name[32];
        std::snprintf(name, sizeof name, "s_%03d.json", k);
        write_json_file((fs::path(dir) / name).string(), interpolate(m, path, s).to_json());
        index.push_back({{"s", s}, {"file", name}, {"count", path.count_at(s)}});
      }
      write_json_file((fs::path(dir) / "index.json").string(),
                      {{"a", seed_a}, {"b", seed_b}, {"samples", index}, {"correspondence", path.correspondence}});
      std::cout << nlohmann::json{{"dir", dir}, {"samples", interp_steps}}.dump() << '\n';
    } else if (eval_gen->parsed()) {
      std::vector<PointSet> gen, ref;
      for (const auto& f : json_files(gen_dir))
        gen.push_back(surface_sample(GarmentParticles::from_json(read_json_file(f.string())), surface_points, g.seed));
      const Dataset d = load_filtered(ref_dir, ref_family.empty() ? std::vector<std::string>{}
                                                                  : std::vector<std::string>{ref_family});
      for (const auto& s : d.samples) ref.push_back(surface_sample(s.particles, surface_points, g.seed));
      if (gen.empty()) throw ValidationError("no particle files in " + gen_dir);
      emit(g, evaluate_generation(gen, ref).to_json());
    } else if (eval_rec->parsed()) {
      std::unique_ptr<PatternModel> model;
      if (variant != "delaunay") {
        if (model_path.empty()) throw ValidationError("--model is required for variant " + variant);
        model = load_pattern_model(model_path, variant == "flow" ? PatternModelKind::Flow : PatternModelKind::Regression);
      }
      const Dataset d = load_dataset(eval_data);
      std::vector<SewingPattern> preds, gts;
      double iou = 0.0;
      int degenerate = 0, failures = 0;
      for (const auto& s : d.samples) {
        if (limit > 0 && static_cast<int>(gts.size()) >= limit) break;
        const GarmentParticles x = rec_noise > 0 ? add_pattern_noise(s.particles, rec_noise, s.seed) : s.particles;
        SewingPattern p;
        try {
          p = recover_one(variant, model.get(), x, steps, s.seed);
        } catch (const RuntimeFailure&) {
          ++failures;  // counted as an empty prediction
        }
        int deg = 0;
        iou += panel_iou(p, s.pattern, &deg);
        degenerate += deg;
        preds.push_back(std::move(p));
        gts.push_back(s.pattern);
      }
      if (gts.empty()) throw ValidationError("dataset has no samples");
      emit(g, {{"variant", variant},
               {"noise", rec_noise},
               {"samples", gts.size()},
               {"panel_accuracy", panel_accuracy(preds, gts)},
               {"mean_iou", iou / static_cast<double>(gts.size())},
               {"stitch_accuracy", stitch_accuracy(preds, gts)},
               {"degenerate_panels", degenerate},
               {"failures", failures}});
    } else if (gc->parsed()) {
      nlohmann::json out = nlohmann::json::object();
      double worst = 0.0;
      Rng rng(g.seed);
      if (gc_target == "all" || gc_target == "flow") {
        TransformerConfig c = tiny_config();
        c.cond_vocab = kCondTokens * (kFamilyCount + 1);
        Transformer net(c, g.seed, false);
        const Mat x = rng.normal_matrix(6, c.in_dim), target = rng.normal_matrix(6, c.out_dim);
        const GradCheckReport r = gradient_check(net, x, 0.3, {label_tokens(1), {}}, target);
        out["flow"] = r.to_json();
        worst = std::max(worst, r.max_rel_error);
      }
      if (gc_target == "all" || gc_target == "ppf") {
        const PatternDims dims;
        TransformerConfig c = tiny_config();
        c.in_dim = c.out_dim = PatternDims::kChannels;
        c.cond_in_dim = 6;
        c.pos_panels = 2;
        c.pos_edges = 3;
        Transformer net(c, g.seed, false);
        const Mat x = rng.normal_matrix(6, c.in_dim), target = rng.normal_matrix(6, c.out_dim);
        const GradCheckReport r = gradient_check(net, x, 0.7, {{}, rng.normal_matrix(5, 6)}, target);
        out["ppf"] = r.to_json();
        worst = std::max(worst, r.max_rel_error);
      }
      const PointSet a = rng.normal_matrix(6, 3), b = rng.normal_matrix(6, 3);
      if (gc_target == "all" || gc_target == "emd") {
        const double e = distance_gradcheck([&](const PointSet& p) { return emd(p, b, {.with_gradient = true}); }, a);
        out["emd"] = {{"max_rel_error", e}};
        worst = std::max(worst, e);
      }
      if (gc_target == "all" || gc_target == "chamfer") {
        const PointSet obs = rng.normal_matrix(4, 3);
        const double e = distance_gradcheck([&](const PointSet& p) { return chamfer_one_sided(p, obs); }, a);
        out["chamfer"] = {{"max_rel_error", e}};
        worst = std::max(worst, e);
      }
      out["max_rel_error"] = worst;
      out["tolerance"] = gc_tol;
      out["pass"] = worst < gc_tol;
      emit(g, out);
      if (worst >= gc_tol) return 2;
    } else if (serve->parsed()) {
      if (!service_config.empty()) {
        ServiceConfig file = ServiceConfig::from_file(service_config);
        if (serve->count("--flow-model")) file.flow_model = svc_cfg.flow_model;
        if (serve->count("--ppf-model")) file.ppf_model = svc_cfg.ppf_model;
        if (serve->count("--regression-model")) file.regression_model = svc_cfg.regression_model;
        if (serve->count("--queue")) file.queue_capacity = svc_cfg.queue_capacity;
        if (serve->count("--workers")) file.workers = svc_cfg.workers;
        if (serve->count("--default-steps")) file.default_steps = svc_cfg.default_steps;
        if (app.count("--out")) file.data_dir = g.out;
        svc_cfg = file;
      } else {
        svc_cfg.data_dir = out_or(g, data_root());
      }
      JobService svc(svc_cfg);
      std::signal(SIGINT, [](int) { g_stop = 1; });
      std::signal(SIGTERM, [](int) { g_stop = 1; });
      port = svc.listen_background(host, port);
      std::cerr << "serving on " << host << ":" << port << " data " << svc_cfg.data_dir << std::endl;
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      svc.stop();
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed input: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
