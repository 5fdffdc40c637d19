#include "gp/synthetic.hpp"

#include <cstdio>
#include <filesystem>

namespace gp {

namespace {

constexpr double kWaist = 100.0;  // height of the skirt waistline
constexpr double kTopHem = 90.0;  // height of the top's hem
constexpr double kSideOffset = 40.0;

const std::array<const char*, kFamilyCount> kFamilyNames{"tube_skirt", "a_line_skirt",
                                                         "two_panel_top", "sleeved_top"};

struct PanelDef {
  PanelPolygon panel;
  double yaw = 0.0;
  double side_offset = 0.0;
  std::function<Vec3(const Vec2&)> drape;
};

Polygon2 rect(double w, double h) { return {{0, 0}, {w, 0}, {w, h}, {0, h}}; }

// Point on a vertical cylinder (axis along y) at angle theta from +z.
Vec3 on_cylinder(double radius, double theta, double y) {
  return {radius * std::sin(theta), y, radius * std::cos(theta)};
}

std::vector<PanelDef> skirt_panels(double W, double L, double flare) {
  const double d = L * std::tan(flare);
  const Polygon2 outline = flare == 0.0 ? rect(W, L)
                                        : Polygon2{{0, 0}, {W + 2 * d, 0}, {W + d, L}, {d, L}};
  auto make = [=](double start) {
    return [=](const Vec2& p) {
      const double width = W + 2.0 * d * (1.0 - p.y() / L);
      const double off = d * p.y() / L;
      const double s = (p.x() - off) / width;
      return on_cylinder(width / M_PI, start + M_PI * s, kWaist - L + p.y());
    };
  };
  PanelDef front{{"front", "skirt_front", outline}, 0.0, -kSideOffset, make(-M_PI / 2)};
  PanelDef back{{"back", "skirt_back", outline}, M_PI, kSideOffset, make(M_PI / 2)};
  return {front, back};
}

std::vector<PanelDef> top_panels(double W, double H, double neck, double shoulder) {
  const double R = W / M_PI;
  const double fold = 0.75 * H;
  auto outline = [=](double nd) {
    return Polygon2{{0, 0}, {W, 0}, {W, H}, {W - shoulder, H}, {W / 2, H - nd}, {shoulder, H}, {0, H}};
  };
  // Depth tapers to zero at the shoulder line so front and back meet there.
  auto make = [=](double start) {
    return [=](const Vec2& p) {
      const double g = p.y() <= fold ? 1.0 : std::cos(0.5 * M_PI * (p.y() - fold) / (H - fold));
      Vec3 x = on_cylinder(R, start + M_PI * p.x() / W, kTopHem + p.y());
      x.z() *= g;
      return x;
    };
  };
  PanelDef front{{"front", "torso_front", outline(neck)}, 0.0, -kSideOffset, make(-M_PI / 2)};
  PanelDef back{{"back", "torso_back", outline(neck / 3.0)}, M_PI, kSideOffset, make(M_PI / 2)};
  return {front, back};
}

PanelDef sleeve_panel(const std::string& id, double side, double R, double Ls, double Cs,
                      double axis_y) {
  const double rs = Cs / (2.0 * M_PI);
  PanelDef s{{id, "sleeve", rect(Ls, Cs)}, side * M_PI / 2, 0.0, [=](const Vec2& p) {
               const double phi = 2.0 * M_PI * p.y() / Cs;
               return Vec3(side * (R + p.x()), axis_y + rs * std::cos(phi), rs * std::sin(phi));
             }};
  s.panel.parent = "front";
  return s;
}

void check_params(Family f, const GarmentParams& params) {
  const auto ranges = param_ranges(f);
  for (const auto& [k, v] : params) {
    auto it = ranges.find(k);
    if (it == ranges.end())
      throw ValidationError("unknown parameter '" + k + "' for " + family_name(f));
    if (!(v >= it->second.first - 1e-12 && v <= it->second.second + 1e-12))
      throw ValidationError("parameter '" + k + "' out of range for " + family_name(f));
  }
}

}  // namespace

std::string family_name(Family f) { return kFamilyNames.at(static_cast<std::size_t>(f)); }

Family family_from_name(const std::string& name) {
  for (int i = 0; i < kFamilyCount; ++i)
    if (name == kFamilyNames[static_cast<std::size_t>(i)]) return static_cast<Family>(i);
  throw ValidationError("unknown garment family '" + name + "'");
}

std::vector<int> label_tokens(int label) {
  if (label < 0 || label > kNullLabel) throw ValidationError("label out of range");
  std::vector<int> out;
  for (int k = 0; k < kCondTokens; ++k) out.push_back(kCondTokens * label + k);
  return out;
}

std::map<std::string, std::pair<double, double>> param_ranges(Family f) {
  switch (f) {
    case Family::TubeSkirt:
      return {{"width", {26, 36}}, {"length", {45, 70}}};
    case Family::ALineSkirt:
      return {{"width", {26, 36}}, {"length", {45, 70}}, {"flare", {0.0, 0.2}},
              {"band_height", {12, 14}}};
    case Family::TwoPanelTop:
      return {{"width", {30, 40}}, {"height", {50, 65}}, {"neck_depth", {8, 12}},
              {"shoulder_width", {8, 12}}};
    case Family::SleevedTop:
      return {{"width", {30, 40}},          {"height", {50, 65}},
              {"neck_depth", {8, 12}},      {"shoulder_width", {8, 12}},
              {"sleeve_length", {15, 30}}, {"sleeve_circumference", {24, 32}}};
  }
  throw ValidationError("unknown garment family");
}

GarmentParams sample_params(Family f, std::uint64_t seed) {
  Rng rng(seed);
  GarmentParams out;
  for (const auto& [k, r] : param_ranges(f)) out[k] = rng.uniform(r.first, r.second);
  // Random draws keep a visible flare; 0 is only reachable explicitly.
  if (f == Family::ALineSkirt) out["flare"] = rng.uniform(0.05, 0.2);
  return out;
}

ParametricGarment generate_garment(Family f, const GarmentParams& given, std::uint64_t seed) {
  check_params(f, given);
  GarmentParams params = sample_params(f, seed);
  for (const auto& [k, v] : given) params[k] = v;

  std::vector<PanelDef> defs;
  std::vector<Stitch> stitches;
  switch (f) {
    case Family::TubeSkirt: {
      defs = skirt_panels(params["width"], params["length"], 0.0);
      stitches = {{0, 1, 1, 3}, {0, 3, 1, 1}};
      break;
    }
    case Family::ALineSkirt: {
      const double W = params["width"], hb = params["band_height"];
      defs = skirt_panels(W, params["length"], params["flare"]);
      PanelDef band{{"waistband", "waistband", {{0, 0}, {W, 0}, {2 * W, 0}, {2 * W, hb}, {0, hb}}},
                    0.0, 0.0, [=](const Vec2& p) {
                      return on_cylinder(W / M_PI, -M_PI / 2 + M_PI * p.x() / W, kWaist + p.y());
                    }};
      defs[0].panel.parent = "waistband";
      defs[1].panel.parent = "waistband";
      defs.push_back(band);
      stitches = {{0, 1, 1, 3}, {0, 3, 1, 1}, {0, 2, 2, 0}, {1, 2, 2, 1}, {2, 2, 2, 4}};
      break;
    }
    case Family::TwoPanelTop:
    case Family::SleevedTop: {
      const double W = params["width"], H = params["height"];
      defs = top_panels(W, H, params["neck_depth"], params["shoulder_width"]);
      stitches = {{0, 1, 1, 6}, {0, 6, 1, 1}, {0, 2, 1, 5}, {0, 5, 1, 2}};
      if (f == Family::SleevedTop) {
        const double Ls = params["sleeve_length"], Cs = params["sleeve_circumference"];
        const double axis_y = kTopHem + 0.85 * H;
        defs.push_back(sleeve_panel("sleeve_l", -1.0, W / M_PI, Ls, Cs, axis_y));
        defs.push_back(sleeve_panel("sleeve_r", 1.0, W / M_PI, Ls, Cs, axis_y));
        stitches.push_back({2, 0, 2, 2});
        stitches.push_back({3, 0, 3, 2});
      }
      break;
    }
  }

  ParametricGarment g;
  g.family = family_name(f);
  for (const auto& [k, v] : params) g.params.emplace_back(k, v);
  g.stitches = stitches;
  g.label_tokens = label_tokens(static_cast<int>(f));
  std::vector<std::function<Vec3(const Vec2&)>> drapes;
  for (auto& d : defs) {
    PanelPolygon p = d.panel;
    const Vec2 c = centroid(p.outline);
    p.translation = d.drape(c);
    p.rotation = Vec3(0.0, d.yaw, 0.0);
    p.placement = Vec2(p.translation.x() + d.side_offset, p.translation.y()) - c;
    g.panels.push_back(std::move(p));
    drapes.push_back(d.drape);
  }
  g.drape_local = [drapes](int panel, const Vec2& local) {
    return drapes.at(static_cast<std::size_t>(panel))(local);
  };
  validate_panel_tree(g.panels);
  return g;
}

PackingResult pack_garment(ParametricGarment& g, const PackingConfig& cfg) {
  PackingResult r = pack_panels(g.panels, cfg);
  for (std::size_t i = 0; i < g.panels.size(); ++i) g.panels[i].placement = r.panels[i].placement;
  return r;
}

SewingPattern pattern_from_garment(const ParametricGarment& g) {
  SewingPattern out;
  for (const auto& p : g.panels) {
    PatternPanel pp;
    pp.id = p.id;
    pp.translation = p.translation;
    pp.rotation = p.rotation;
    const Polygon2 placed = p.placed();
    pp.anchor = placed.front();
    for (std::size_t k = 0; k < placed.size(); ++k)
      pp.edges.push_back(PatternEdge::straight(placed[(k + 1) % placed.size()] - placed[k]));
    out.panels.push_back(std::move(pp));
  }
  auto midpoint3d = [&](int panel, int edge) {
    const Polygon2& o = g.panels[static_cast<std::size_t>(panel)].outline;
    const Vec2 m = 0.5 * (o[static_cast<std::size_t>(edge)] + o[(static_cast<std::size_t>(edge) + 1) % o.size()]);
    return g.drape_local(panel, m);
  };
  for (const auto& s : g.stitches) {
    const Vec3 tag = 0.5 * (midpoint3d(s.panel_a, s.edge_a) + midpoint3d(s.panel_b, s.edge_b));
    for (const auto& [p, e] : {std::pair{s.panel_a, s.edge_a}, std::pair{s.panel_b, s.edge_b}}) {
      auto& edge = out.panels[static_cast<std::size_t>(p)].edges[static_cast<std::size_t>(e)];
      edge.stitched = true;
      edge.tag = tag;
    }
    out.stitches.push_back({s.panel_a, s.edge_a, s.panel_b, s.edge_b});
  }
  return out;
}

void DatasetSpec::validate() const {
  if (n_garments < 0) throw ValidationError("n_garments must be >= 0");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ValidationError("family weights must be >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("family weights must sum to 1");
  if (!(area_per_point > 0.0)) throw ValidationError("area_per_point must be > 0");
  if (n_max < 1) throw ValidationError("n_max must be >= 1");
  packing.validate();
}

nlohmann::json DatasetSpec::to_json() const {
  return {{"n_garments", n_garments},
          {"weights", weights},
          {"seed", seed},
          {"area_per_point", area_per_point},
          {"n_max", n_max},
          {"pad", packing.pad},
          {"max_steps", packing.max_steps},
          {"step_scale", packing.step_scale},
          {"bbox", {packing.bbox.min_u, packing.bbox.max_u, packing.bbox.min_v, packing.bbox.max_v}}};
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
  DatasetSpec s;
  try {
    s.n_garments = j.value("n_garments", 0);
    if (j.contains("weights")) {
      if (j["weights"].is_array()) {
        if (j["weights"].size() != kFamilyCount) throw ValidationError("weights need 4 entries");
        for (int i = 0; i < kFamilyCount; ++i) s.weights[static_cast<std::size_t>(i)] = j["weights"][i];
      } else {
        s.weights.fill(0.0);
        for (const auto& [k, v] : j["weights"].items())
          s.weights[static_cast<std::size_t>(family_from_name(k))] = v.get<double>();
      }
    }
    s.seed = j.value("seed", std::uint64_t{0});
    s.area_per_point = j.value("area_per_point", s.area_per_point);
    s.n_max = j.value("n_max", s.n_max);
    s.packing.pad = j.value("pad", s.packing.pad);
    s.packing.max_steps = j.value("max_steps", s.packing.max_steps);
    s.packing.step_scale = j.value("step_scale", s.packing.step_scale);
    if (j.contains("bbox")) {
      const auto& b = j["bbox"];
      s.packing.bbox = {b[0], b[1], b[2], b[3]};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed dataset spec: ") + e.what());
  }
  s.validate();
  return s;
}

DatasetSample make_sample(Family f, std::uint64_t seed, const DatasetSpec& spec) {
  ParametricGarment g = generate_garment(f, {}, seed);
  const PackingResult pr = pack_garment(g, spec.packing);
  if (!pr.success) throw RuntimeFailure("packing failed: " + pr.failure);
  DatasetSample s;
  s.family = f;
  s.seed = seed;
  for (const auto& [k, v] : g.params) s.params[k] = v;
  s.particles = build_particles(g, spec.area_per_point, spec.packing.bbox);
  if (s.particles.size() > spec.n_max)
    throw RuntimeFailure("particle count " + std::to_string(s.particles.size()) + " exceeds n_max");
  s.pattern = pattern_from_garment(g);
  s.label_tokens = g.label_tokens;
  return s;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset d;
  d.spec = spec;
  const long max_attempts = 10L * spec.n_garments;
  for (long attempt = 0; attempt < max_attempts &&
                         static_cast<int>(d.samples.size()) < spec.n_garments;
       ++attempt) {
    const std::uint64_t seed = derive_seed(spec.seed, static_cast<std::uint64_t>(attempt));
    Rng pick(derive_seed(seed, 0x5eed));
    const double u = pick.uniform();
    int fam = 0;
    double acc = 0.0;
    for (; fam < kFamilyCount - 1; ++fam) {
      acc += spec.weights[static_cast<std::size_t>(fam)];
      if (u < acc && spec.weights[static_cast<std::size_t>(fam)] > 0.0) break;
    }
    while (spec.weights[static_cast<std::size_t>(fam)] <= 0.0) --fam;
    try {
      DatasetSample s = make_sample(static_cast<Family>(fam), seed, spec);
      char name[32];
      std::snprintf(name, sizeof(name), "sample_%05zu", d.samples.size());
      s.name = name;
      d.samples.push_back(std::move(s));
    } catch (const RuntimeFailure& e) {
      d.filtered.push_back(family_name(static_cast<Family>(fam)) + " seed " +
                           std::to_string(seed) + ": " + e.what());
    }
  }
  return d;
}

void write_dataset(const Dataset& d, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : d.samples) {
    const fs::path sd = fs::path(dir) / s.name;
    nlohmann::json meta{{"family", family_name(s.family)},
                        {"seed", s.seed},
                        {"params", s.params},
                        {"label_tokens", s.label_tokens}};
    write_json_file((sd / "particles.json").string(), s.particles.to_json());
    write_json_file((sd / "pattern.json").string(), s.pattern.to_json());
    write_json_file((sd / "meta.json").string(), meta);
    samples.push_back({{"name", s.name},
                       {"family", family_name(s.family)},
                       {"seed", s.seed},
                       {"n_particles", s.particles.size()},
                       {"n_panels", s.pattern.panels.size()}});
  }
  write_json_file((fs::path(dir) / "manifest.json").string(),
                  {{"spec", d.spec.to_json()}, {"samples", samples}, {"filtered", d.filtered}});
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest = fs::path(dir) / "manifest.json";
  if (!fs::exists(manifest)) throw ValidationError("no manifest.json in " + dir);
  const nlohmann::json m = read_json_file(manifest.string());
  Dataset d;
  d.spec = DatasetSpec::from_json(m.at("spec"));
  for (const auto& e : m.at("samples")) {
    DatasetSample s;
    s.name = e.at("name").get<std::string>();
    const fs::path sd = fs::path(dir) / s.name;
    const nlohmann::json meta = read_json_file((sd / "meta.json").string());
    s.family = family_from_name(meta.at("family").get<std::string>());
    s.seed = meta.at("seed").get<std::uint64_t>();
    s.params = meta.at("params").get<GarmentParams>();
    s.label_tokens = meta.at("label_tokens").get<std::vector<int>>();
    s.particles = GarmentParticles::from_json(read_json_file((sd / "particles.json").string()));
    s.pattern = SewingPattern::from_json(read_json_file((sd / "pattern.json").string()));
    d.samples.push_back(std::move(s));
  }
  if (m.contains("filtered")) d.filtered = m["filtered"].get<std::vector<std::string>>();
  return d;
}

}  // namespace gp
