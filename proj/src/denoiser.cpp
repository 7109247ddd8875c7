#include "t2g/denoiser.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>

#include "t2g/error.hpp"

namespace t2g {

nn::ParamSet init_denoiser(const DenoiserConfig& cfg, int vocab_size, std::uint64_t seed) {
  if (cfg.feature <= 0 || cfg.heads <= 0 || cfg.feature % cfg.heads != 0 || cfg.point_hidden <= 0 ||
      cfg.points <= 0 || cfg.timestep_embedding <= 0 || cfg.timestep_embedding % 2 != 0) {
    throw Error(ErrorKind::kInvalidInput, "denoiser widths must be positive and divisible by the head count");
  }
  std::mt19937_64 rng(seed);
  const int f = cfg.feature;
  nn::ParamSet p;
  add_text_encoder(p, "text", vocab_size, cfg.text, rng);
  nn::add_dense(p, "den.pt.l1", 3, cfg.point_hidden, rng);
  nn::add_dense(p, "den.pt.l2", cfg.point_hidden, f, rng);
  nn::add_dense(p, "den.pt.out", f, f, rng);
  nn::add_dense(p, "den.fuse.q", f, f, rng);
  nn::add_dense(p, "den.fuse.k", cfg.text.feature, f, rng);
  nn::add_dense(p, "den.fuse.v", cfg.text.feature, f, rng);
  nn::add_dense_zero(p, "den.fuse.o", f, f);
  nn::add_dense(p, "den.in", kGraspDim, f, rng);
  nn::add_dense(p, "den.temb", cfg.timestep_embedding, f, rng);
  nn::add_dense(p, "den.res.l1", f, f, rng);
  nn::add_dense(p, "den.res.l2", f, f, rng);
  nn::add_dense(p, "den.xattn.q", f, f, rng);
  nn::add_dense(p, "den.xattn.k", f, f, rng);
  nn::add_dense(p, "den.xattn.v", f, f, rng);
  nn::add_dense_zero(p, "den.xattn.o", f, f);
  nn::add_dense(p, "den.head.l1", f, f, rng);
  nn::add_dense(p, "den.head.l2", f, kGraspDim, rng);
  return p;
}

std::vector<int> farthest_point_indices(const PointCloud& cloud, int count) {
  cloud.validate();
  if (count <= 0) throw Error(ErrorKind::kInvalidInput, "point count must be positive");
  const std::size_t n = cloud.size();
  std::vector<int> out;
  if (n <= static_cast<std::size_t>(count)) {
    for (int i = 0; i < count; ++i) out.push_back(static_cast<int>(static_cast<std::size_t>(i) % n));
    return out;
  }
  const Vec3 c = cloud.centroid();
  std::size_t first = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if ((cloud.points[i] - c).squaredNorm() > (cloud.points[first] - c).squaredNorm()) first = i;
  }
  std::vector<double> d(n, std::numeric_limits<double>::infinity());
  std::size_t cur = first;
  for (int k = 0; k < count; ++k) {
    out.push_back(static_cast<int>(cur));
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = std::min(d[i], (cloud.points[i] - cloud.points[cur]).squaredNorm());
      if (d[i] > d[next]) next = i;
    }
    cur = next;
  }
  return out;
}

Eigen::MatrixXd normalized_points(const PartLabeledObject& object, int count) {
  const auto idx = farthest_point_indices(object.cloud, count);
  Eigen::MatrixXd m(count, 3);
  for (int i = 0; i < count; ++i) {
    m.row(i) = ((object.cloud.points[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] - object.centroid) /
                10.0)
                   .transpose();
  }
  return m;
}

Eigen::MatrixXd timestep_embedding(const std::vector<int>& t, int width) {
  const int half = width / 2;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.size()), width);
  for (std::size_t r = 0; r < t.size(); ++r) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      m(static_cast<Eigen::Index>(r), i) = std::sin(t[r] * freq);
      m(static_cast<Eigen::Index>(r), half + i) = std::cos(t[r] * freq);
    }
  }
  return m;
}

ad::Var encode_points(const nn::Bound& p, ad::Var points, int batch) {
  ad::Var h = ad::relu(nn::dense(p, "den.pt.l1", points));
  h = ad::relu(nn::dense(p, "den.pt.l2", h));
  return nn::dense(p, "den.pt.out", ad::block_max(h, batch));
}

ad::Var fuse_conditions(const nn::Bound& p, ad::Var f_p, ad::Var f_l, const DenoiserConfig& cfg) {
  const ad::Var q = nn::dense(p, "den.fuse.q", f_p);
  const ad::Var k = nn::dense(p, "den.fuse.k", f_l);
  const ad::Var v = nn::dense(p, "den.fuse.v", f_l);
  return ad::add(f_p, nn::dense(p, "den.fuse.o", ad::attention(q, k, v, cfg.heads, 1)));
}

ad::Var denoise(const nn::Bound& p, ad::Var g_t, const std::vector<int>& t, ad::Var c, const DenoiserConfig& cfg,
                int steps) {
  if (static_cast<Eigen::Index>(t.size()) != g_t.rows()) {
    throw Error(ErrorKind::kInvalidInput, "one timestep per grasp row is required");
  }
  for (int s : t) {
    if (s < 1 || s > steps) throw Error(ErrorKind::kInvalidInput, fmt::format("timestep {} outside 1..{}", s, steps));
  }
  ad::Tape& tape = *g_t.tape;
  const ad::Var h = nn::dense(p, "den.in", g_t);
  const ad::Var te =
      ad::silu(nn::dense(p, "den.temb", tape.constant(timestep_embedding(t, cfg.timestep_embedding))));
  const ad::Var u = ad::silu(ad::add(nn::dense(p, "den.res.l1", h), te));
  const ad::Var r = ad::add(h, nn::dense(p, "den.res.l2", u));
  const ad::Var a = ad::attention(nn::dense(p, "den.xattn.q", r), nn::dense(p, "den.xattn.k", c),
                                  nn::dense(p, "den.xattn.v", c), cfg.heads, 1);
  const ad::Var x = ad::add(r, nn::dense(p, "den.xattn.o", a));
  return nn::dense(p, "den.head.l2", ad::silu(nn::dense(p, "den.head.l1", x)));
}

PointFeature encode_points(const Eigen::MatrixXd& points, const nn::ParamSet& params) {
  if (points.rows() == 0 || points.cols() != 3) throw Error(ErrorKind::kInvalidInput, "points must be n x 3");
  ad::Tape tape;
  const nn::Bound p = nn::bind(tape, params, false);
  return encode_points(p, tape.constant(points), 1).value().row(0).transpose();
}

Eigen::VectorXd fuse_conditions(const PointFeature& f_p, const TextFeature& f_l, const nn::ParamSet& params,
                                const DenoiserConfig& cfg) {
  ad::Tape tape;
  const nn::Bound p = nn::bind(tape, params, false);
  return fuse_conditions(p, tape.constant(f_p.transpose()), tape.constant(f_l.transpose()), cfg)
      .value()
      .row(0)
      .transpose();
}

Eigen::VectorXd denoise(const Eigen::VectorXd& g_t, int t, const Eigen::VectorXd& c, const nn::ParamSet& params,
                        const DenoiserConfig& cfg, int steps) {
  if (g_t.size() != kGraspDim) throw Error(ErrorKind::kInvalidInput, "grasp vector must have 66 entries");
  ad::Tape tape;
  const nn::Bound p = nn::bind(tape, params, false);
  return denoise(p, tape.constant(g_t.transpose()), {t}, tape.constant(c.transpose()), cfg, steps)
      .value()
      .row(0)
      .transpose();
}

}  // namespace t2g
