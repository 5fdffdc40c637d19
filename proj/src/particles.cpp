#include "gp/particles.hpp"

#include <filesystem>
#include <fstream>

namespace gp {

void GarmentParticles::validate(int n_max) const {
  if (points.cols() != 5) throw ValidationError("particles must have 5 coordinates per point");
  if (points.rows() != flags.size()) throw ValidationError("points and flags differ in length");
  if (points.rows() < 1) throw ValidationError("particle set is empty");
  if (points.rows() > n_max)
    throw ValidationError("particle count " + std::to_string(points.rows()) + " exceeds N_max " +
                          std::to_string(n_max));
  if (!points.allFinite() || !flags.allFinite()) throw ValidationError("non-finite particle values");
  for (Eigen::Index i = 0; i < flags.size(); ++i)
    if (flags[i] < 0.0 || flags[i] > 1.0) throw ValidationError("boundary flag outside [0,1]");
}

Mat GarmentParticles::as_channels() const {
  Mat c(points.rows(), 6);
  c.leftCols(5) = points;
  c.col(5) = flags;
  return c;
}

GarmentParticles GarmentParticles::from_channels(const Mat& channels) {
  if (channels.cols() != 6) throw ValidationError("expected 6 channels");
  return {channels.leftCols(5), channels.col(5)};
}

GarmentParticles GarmentParticles::permuted(const std::vector<int>& perm) const {
  GarmentParticles out;
  out.points.resize(points.rows(), 5);
  out.flags.resize(flags.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.points.row(static_cast<Eigen::Index>(i)) = points.row(perm[i]);
    out.flags[static_cast<Eigen::Index>(i)] = flags[perm[i]];
  }
  return out;
}

nlohmann::json GarmentParticles::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    pts.push_back({points(i, 0), points(i, 1), points(i, 2), points(i, 3), points(i, 4)});
  nlohmann::json fl = nlohmann::json::array();
  for (Eigen::Index i = 0; i < flags.size(); ++i) {
    const double f = flags[i];
    if (f == 0.0 || f == 1.0)
      fl.push_back(static_cast<int>(f));
    else
      fl.push_back(f);
  }
  return {{"points", pts}, {"flags", fl}};
}

GarmentParticles GarmentParticles::from_json(const nlohmann::json& j) {
  if (!j.contains("points") || !j.contains("flags"))
    throw ValidationError("particles JSON needs 'points' and 'flags'");
  const auto& pts = j.at("points");
  const auto& fl = j.at("flags");
  if (!pts.is_array() || !fl.is_array()) throw ValidationError("'points'/'flags' must be arrays");
  if (pts.size() != fl.size()) throw ValidationError("points and flags differ in length");
  GarmentParticles out;
  out.points.resize(static_cast<Eigen::Index>(pts.size()), 5);
  out.flags.resize(static_cast<Eigen::Index>(fl.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!pts[i].is_array() || pts[i].size() != 5)
      throw ValidationError("each particle needs 5 coordinates");
    for (int c = 0; c < 5; ++c) out.points(static_cast<Eigen::Index>(i), c) = pts[i][c].get<double>();
    out.flags[static_cast<Eigen::Index>(i)] = fl[i].get<double>();
  }
  return out;
}

void Camera::validate() const {
  if (!P.allFinite()) throw ValidationError("camera matrix is not finite");
  Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> svd(P);
  const auto s = svd.singularValues();
  if (s(1) <= 1e-12 * std::max(1.0, s(0))) throw ValidationError("degenerate camera: rank < 2");
}

Camera Camera::front() {
  Camera c;
  c.P << 1, 0, 0, 1, 0, 0;
  return c;
}

Camera Camera::side() {
  Camera c;
  c.P << 0, 0, 0, 1, 1, 0;
  return c;
}

Camera Camera::top() {
  Camera c;
  c.P << 1, 0, 0, 0, 0, 1;
  return c;
}

Camera Camera::azimuth(double radians) {
  Camera c;
  c.P << std::cos(radians), 0, 0, 1, std::sin(radians), 0;
  return c;
}

nlohmann::json Camera::to_json() const {
  return nlohmann::json::array({{P(0, 0), P(0, 1)}, {P(1, 0), P(1, 1)}, {P(2, 0), P(2, 1)}});
}

Camera Camera::from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("camera must be a 3x2 matrix");
  Camera c;
  for (int r = 0; r < 3; ++r) {
    if (!j[r].is_array() || j[r].size() != 2) throw ValidationError("camera must be a 3x2 matrix");
    c.P(r, 0) = j[r][0].get<double>();
    c.P(r, 1) = j[r][1].get<double>();
  }
  return c;
}

PointSet project_domain(const GarmentParticles& x) { return x.points.leftCols(2); }

PointSet project_image(const GarmentParticles& x) { return x.points.rightCols(3); }

PointSet project_silhouette(const GarmentParticles& x, const Camera& cam) {
  cam.validate();
  return project_image(x) * cam.P;
}

nlohmann::json point_set_to_json(const PointSet& p) {
  nlohmann::json pts = nlohmann::json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < p.cols(); ++c) row.push_back(p(i, c));
    pts.push_back(std::move(row));
  }
  return {{"dim", p.cols()}, {"points", pts}};
}

PointSet point_set_from_json(const nlohmann::json& j) {
  if (!j.contains("points")) throw ValidationError("point set JSON needs 'points'");
  const auto& pts = j.at("points");
  if (!pts.is_array() || pts.empty()) throw ValidationError("point set is empty");
  const int dim = j.contains("dim") ? j.at("dim").get<int>() : static_cast<int>(pts[0].size());
  if (dim != 2 && dim != 3) throw ValidationError("point set dim must be 2 or 3");
  PointSet out(static_cast<Eigen::Index>(pts.size()), dim);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!pts[i].is_array() || static_cast<int>(pts[i].size()) != dim)
      throw ValidationError("point " + std::to_string(i) + " does not have dim coordinates");
    for (int c = 0; c < dim; ++c) out(static_cast<Eigen::Index>(i), c) = pts[i][c].get<double>();
  }
  return out;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeFailure("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("malformed JSON in " + path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path);
  out << j.dump(1) << '\n';
}

}  // namespace gp
