#pragma once

#include <nlohmann/json.hpp>

#include "gp/common.hpp"

namespace gp {

/// Desk-scale particle cap. The full-scale value is kept as kPaperMaxParticles.
inline constexpr int kDefaultMaxParticles = 256;
inline constexpr int kPaperMaxParticles = 8192;

/// Joint sewing-pattern / drape sample: each row is (u, v, x, y, z) in cm,
/// with a boundary flag per row. Row order carries no meaning.
struct GarmentParticles {
  Mat points;             // N x 5
  Eigen::VectorXd flags;  // N

  GarmentParticles() = default;
  GarmentParticles(Mat pts, Eigen::VectorXd f) : points(std::move(pts)), flags(std::move(f)) {}

  int size() const { return static_cast<int>(points.rows()); }

  /// Throws ValidationError on shape or range violations.
  void validate(int n_max = kDefaultMaxParticles) const;

  /// Returns the six-channel state (u, v, x, y, z, flag).
  Mat as_channels() const;
  static GarmentParticles from_channels(const Mat& channels);

  GarmentParticles permuted(const std::vector<int>& perm) const;

  nlohmann::json to_json() const;
  static GarmentParticles from_json(const nlohmann::json& j);
};

/// View projection onto the image plane (3 x 2, rank 2).
struct Camera {
  Eigen::Matrix<double, 3, 2> P = Eigen::Matrix<double, 3, 2>::Zero();

  void validate() const;

  static Camera front();
  static Camera side();
  static Camera top();
  /// Rotates the front view about the vertical axis.
  static Camera azimuth(double radians);

  nlohmann::json to_json() const;
  static Camera from_json(const nlohmann::json& j);
};

PointSet project_domain(const GarmentParticles& x);
PointSet project_image(const GarmentParticles& x);
PointSet project_silhouette(const GarmentParticles& x, const Camera& cam);

nlohmann::json point_set_to_json(const PointSet& p);
PointSet point_set_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace gp
