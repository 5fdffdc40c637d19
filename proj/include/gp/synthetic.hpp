#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "gp/construction.hpp"
#include "gp/pattern.hpp"

namespace gp {

enum class Family { TubeSkirt = 0, ALineSkirt = 1, TwoPanelTop = 2, SleevedTop = 3 };
inline constexpr int kFamilyCount = 4;
/// Label index used for unconditional generation.
inline constexpr int kNullLabel = kFamilyCount;
inline constexpr int kCondTokens = 4;

std::string family_name(Family f);
Family family_from_name(const std::string& name);

/// Conditioning tokens of a label: [4l, 4l+1, 4l+2, 4l+3].
std::vector<int> label_tokens(int label);

using GarmentParams = std::map<std::string, double>;

/// Inclusive range of each parameter of a family.
std::map<std::string, std::pair<double, double>> param_ranges(Family f);

/// Uniform draw of every parameter within its range.
GarmentParams sample_params(Family f, std::uint64_t seed);

/// Builds panels, stitches and the analytic drape. Missing parameters are drawn
/// from the seed; out-of-range values throw ValidationError. Panel placements
/// are initialized from the 2D projection of each panel's drape pose.
ParametricGarment generate_garment(Family f, const GarmentParams& params, std::uint64_t seed);

/// Runs panel packing and writes the placements back into the garment.
PackingResult pack_garment(ParametricGarment& g, const PackingConfig& cfg = {});

/// Ground-truth pattern of a packed garment; stitch tags are the mean 3D
/// midpoint of each stitched pair.
SewingPattern pattern_from_garment(const ParametricGarment& g);

struct DatasetSpec {
  int n_garments = 0;
  std::array<double, kFamilyCount> weights{0.25, 0.25, 0.25, 0.25};
  std::uint64_t seed = 0;
  double area_per_point = 40.0;
  int n_max = kDefaultMaxParticles;
  PackingConfig packing;

  void validate() const;
  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j);
};

struct DatasetSample {
  std::string name;
  Family family;
  std::uint64_t seed;
  GarmentParams params;
  GarmentParticles particles;
  SewingPattern pattern;
  std::vector<int> label_tokens;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<DatasetSample> samples;
  std::vector<std::string> filtered;  // reasons for rejected draws
};

/// Builds one sample from its family and seed (parameters drawn from the
/// seed). Throws RuntimeFailure when packing, the bounding box, or the
/// particle cap rejects it.
DatasetSample make_sample(Family f, std::uint64_t seed, const DatasetSpec& spec);

/// Draws garments until n_garments pass the filters (at most 10 n attempts).
Dataset generate_dataset(const DatasetSpec& spec);

void write_dataset(const Dataset& d, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace gp
