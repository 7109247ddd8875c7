#include "t2g/diffusion.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "t2g/error.hpp"

namespace t2g {

using json = nlohmann::json;

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1 || !(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw Error(ErrorKind::kInvalidInput,
                fmt::format("invalid noise schedule: T={} beta in [{}, {}]", steps, beta_start, beta_end));
  }
  NoiseSchedule s;
  s.steps = steps;
  const auto n = static_cast<std::size_t>(steps) + 1;
  s.beta.assign(n, 0.0);
  s.alpha.assign(n, 1.0);
  s.alpha_bar.assign(n, 1.0);
  s.beta_tilde.assign(n, 0.0);
  s.one_minus_alpha_bar.assign(n, 0.0);
  for (std::size_t t = 1; t < n; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
    s.beta[t] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha[t] * s.alpha_bar[t - 1];
    s.one_minus_alpha_bar[t] = s.one_minus_alpha_bar[t - 1] + s.alpha_bar[t - 1] * s.beta[t];
    s.beta_tilde[t] = s.one_minus_alpha_bar[t - 1] / s.one_minus_alpha_bar[t] * s.beta[t];
  }
  return s;
}

namespace {

void check_step(int t, const NoiseSchedule& s) {
  if (t < 1 || t > s.steps) throw Error(ErrorKind::kInvalidInput, fmt::format("step {} outside 1..{}", t, s.steps));
}

}  // namespace

Eigen::VectorXd q_sample(const Eigen::VectorXd& g0, int t, const Eigen::VectorXd& eps, const NoiseSchedule& s) {
  check_step(t, s);
  if (g0.size() != eps.size()) throw Error(ErrorKind::kInvalidInput, "noise and grasp sizes differ");
  const auto i = static_cast<std::size_t>(t);
  return std::sqrt(s.alpha_bar[i]) * g0 + std::sqrt(s.one_minus_alpha_bar[i]) * eps;
}

PosteriorCoefficients posterior_coefficients(int t, const NoiseSchedule& s) {
  check_step(t, s);
  const auto i = static_cast<std::size_t>(t);
  PosteriorCoefficients c;
  c.predicted = std::sqrt(s.alpha_bar[i - 1]) * s.beta[i] / s.one_minus_alpha_bar[i];
  c.current = std::sqrt(s.alpha[i]) * s.one_minus_alpha_bar[i - 1] / s.one_minus_alpha_bar[i];
  c.variance = s.beta_tilde[i];
  return c;
}

Eigen::VectorXd posterior_step(const Eigen::VectorXd& g0_hat, const Eigen::VectorXd& g_t, int t,
                               const NoiseSchedule& s, const Eigen::VectorXd& z) {
  const PosteriorCoefficients c = posterior_coefficients(t, s);
  if (g0_hat.size() != g_t.size()) throw Error(ErrorKind::kInvalidInput, "grasp sizes differ");
  Eigen::VectorXd mu = c.predicted * g0_hat + c.current * g_t;
  if (c.variance == 0.0) return mu;
  if (z.size() != g_t.size()) throw Error(ErrorKind::kInvalidInput, "noise and grasp sizes differ");
  return mu + std::sqrt(c.variance) * z;
}

namespace {

Eigen::VectorXd standard_normal(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

Eigen::VectorXd reverse_process(const NoiseSchedule& s, Eigen::VectorXd g, const Predictor& predict,
                                std::mt19937_64& rng) {
  for (int t = s.steps; t >= 1; --t) {
    const Eigen::VectorXd g0 = predict(g, t);
    if (!g0.allFinite()) throw Error(ErrorKind::kNumerical, fmt::format("non-finite prediction at step {}", t));
    const Eigen::VectorXd z = t > 1 ? standard_normal(g.size(), rng) : Eigen::VectorXd();
    g = posterior_step(g0, g, t, s, z);
    if (!g.allFinite()) throw Error(ErrorKind::kNumerical, fmt::format("non-finite sample at step {}", t));
  }
  return g;
}

Eigen::VectorXd DiffusionModel::to_network(const GraspVector& g) const {
  const Eigen::Map<const Eigen::VectorXd> v(g.values.data(), kGraspDim);
  return (v - mean).cwiseQuotient(scale);
}

GraspVector DiffusionModel::from_network(const Eigen::VectorXd& x) const {
  if (x.size() != kGraspDim) throw Error(ErrorKind::kInvalidInput, "grasp vector must have 66 entries");
  const Eigen::VectorXd v = x.cwiseProduct(scale) + mean;
  return GraspVector(std::span<const double>(v.data(), kGraspDim));
}

bool DiffusionModel::operator==(const DiffusionModel& o) const {
  return denoiser == o.denoiser && steps == o.steps && beta_start == o.beta_start && beta_end == o.beta_end &&
         vocab == o.vocab && mean == o.mean && scale == o.scale && params == o.params && segnet == o.segnet &&
         text_ablated == o.text_ablated;
}

DiffusionModel init_model(const DenoiserConfig& cfg, int steps, double beta_start, double beta_end,
                          std::uint64_t seed, const Vocabulary& vocab) {
  make_schedule(steps, beta_start, beta_end);
  DiffusionModel m;
  m.denoiser = cfg;
  m.steps = steps;
  m.beta_start = beta_start;
  m.beta_end = beta_end;
  m.vocab = vocab;
  m.params = init_denoiser(cfg, vocab.size(), seed);
  return m;
}

namespace {

const std::vector<std::string> kTextValueParams = {"den.fuse.v.w", "den.fuse.v.b"};

// Network-space loss graph for a batch; returns the loss node.
ad::Var batch_loss(const DiffusionModel& model, const NoiseSchedule& s, const nn::Bound& p, ad::Tape& tape,
                   const std::vector<const Eigen::MatrixXd*>& points, const std::vector<std::vector<int>>& texts,
                   const Eigen::MatrixXd& g0, const std::vector<int>& t, const Eigen::MatrixXd& eps) {
  const auto batch = static_cast<int>(points.size());
  const auto n = points.front()->rows();
  Eigen::MatrixXd pts(batch * n, 3);
  for (int b = 0; b < batch; ++b) pts.middleRows(b * n, n) = *points[static_cast<std::size_t>(b)];
  Eigen::MatrixXd gt(g0.rows(), g0.cols());
  for (int b = 0; b < batch; ++b) {
    const auto i = static_cast<std::size_t>(t[static_cast<std::size_t>(b)]);
    gt.row(b) = std::sqrt(s.alpha_bar[i]) * g0.row(b) + std::sqrt(s.one_minus_alpha_bar[i]) * eps.row(b);
  }
  const ad::Var f_p = encode_points(p, tape.constant(std::move(pts)), batch);
  const ad::Var f_l = encode_text(p, "text", texts);
  const ad::Var c = fuse_conditions(p, f_p, f_l, model.denoiser);
  const ad::Var pred = denoise(p, tape.constant(std::move(gt)), t, c, model.denoiser, model.steps);
  return ad::squared_error(pred, tape.constant(g0));
}

}  // namespace

double diffusion_loss(const DiffusionModel& model, const std::vector<LossItem>& items) {
  if (items.empty()) throw Error(ErrorKind::kInvalidInput, "no loss items");
  const NoiseSchedule s = model.schedule();
  std::vector<Eigen::MatrixXd> pts;
  std::vector<std::vector<int>> texts;
  Eigen::MatrixXd g0(static_cast<Eigen::Index>(items.size()), kGraspDim);
  Eigen::MatrixXd eps(g0.rows(), kGraspDim);
  std::vector<int> t;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    pts.push_back(normalized_points(*it.object, model.denoiser.points));
    texts.push_back(tokenize(it.text, model.vocab));
    g0.row(static_cast<Eigen::Index>(i)) = model.to_network(it.grasp).transpose();
    if (it.eps.size() != kGraspDim) throw Error(ErrorKind::kInvalidInput, "noise must have 66 entries");
    eps.row(static_cast<Eigen::Index>(i)) = it.eps.transpose();
    check_step(it.t, s);
    t.push_back(it.t);
  }
  std::vector<const Eigen::MatrixXd*> ptrs;
  for (const auto& m : pts) ptrs.push_back(&m);
  ad::Tape tape;
  const nn::Bound p = nn::bind(tape, model.params, false);
  return batch_loss(model, s, p, tape, ptrs, texts, g0, t, eps).value()(0, 0);
}

TrainResult train(const std::vector<DatasetRecord>& data, const TrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.batch_size <= 0 || !(cfg.learning_rate > 0.0)) {
    throw Error(ErrorKind::kInvalidInput, "epochs, batch size and learning rate must be positive");
  }
  struct Item {
    std::size_t record;
    const GraspSample* sample;
  };
  std::vector<Item> items;
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (const auto& s : data[r].samples) items.push_back({r, &s});
  }
  if (items.empty()) throw Error(ErrorKind::kInvalidInput, "training dataset has no grasp samples");

  TrainResult out;
  DiffusionModel& model = out.model;
  model = init_model(cfg.denoiser, cfg.steps, cfg.beta_start, cfg.beta_end, derive_seed(cfg.seed, 0x696e6974));
  model.text_ablated = cfg.ablate_text;
  if (cfg.ablate_text) {
    for (const auto& name : kTextValueParams) model.params.at(name).setZero();
  }

  // Per-coordinate standardization; constant coordinates keep a small scale so
  // they decode to their constant value.
  Eigen::MatrixXd all(static_cast<Eigen::Index>(items.size()), kGraspDim);
  for (std::size_t i = 0; i < items.size(); ++i) {
    all.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(items[i].sample->grasp.values.data(), kGraspDim);
  }
  model.mean = all.colwise().mean().transpose();
  const Eigen::RowVectorXd var = (all.rowwise() - model.mean.transpose()).colwise().squaredNorm() /
                                 static_cast<double>(items.size());
  model.scale = var.cwiseSqrt().cwiseMax(1e-3).transpose();

  std::vector<Eigen::MatrixXd> points;
  for (const auto& r : data) points.push_back(normalized_points(r.object, cfg.denoiser.points));
  Eigen::MatrixXd targets(all.rows(), kGraspDim);
  for (Eigen::Index i = 0; i < all.rows(); ++i) {
    targets.row(i) = ((all.row(i).transpose() - model.mean).cwiseQuotient(model.scale)).transpose();
  }

  const NoiseSchedule s = model.schedule();
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x747261696e));
  std::normal_distribution<double> normal(0.0, 1.0);
  nn::Adam opt(cfg.learning_rate);
  const std::vector<std::string> frozen = cfg.ablate_text ? kTextValueParams : std::vector<std::string>{};
  std::vector<std::size_t> order(items.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int step = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size), ++step) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const auto b = static_cast<Eigen::Index>(end - begin);
      std::vector<const Eigen::MatrixXd*> pts;
      std::vector<std::vector<int>> texts;
      Eigen::MatrixXd g0(b, kGraspDim);
      Eigen::MatrixXd eps(b, kGraspDim);
      std::vector<int> t;
      for (Eigen::Index k = 0; k < b; ++k) {
        const std::size_t idx = order[begin + static_cast<std::size_t>(k)];
        const Item& it = items[idx];
        pts.push_back(&points[it.record]);
        const std::string& text = choose_description(*it.sample, derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1, idx));
        texts.push_back(tokenize(text, model.vocab));
        g0.row(k) = targets.row(static_cast<Eigen::Index>(idx));
        t.push_back(1 + static_cast<int>(rng() % static_cast<std::uint64_t>(s.steps)));
        for (Eigen::Index j = 0; j < kGraspDim; ++j) eps(k, j) = normal(rng);
      }
      ad::Tape tape;
      const nn::Bound p = nn::bind(tape, model.params);
      const ad::Var loss = batch_loss(model, s, p, tape, pts, texts, g0, t, eps);
      const double value = loss.value()(0, 0);
      if (!std::isfinite(value)) {
        throw Error(ErrorKind::kNumerical, fmt::format("training loss is not finite at epoch {} step {}", epoch, step));
      }
      total += value * static_cast<double>(b);
      tape.backward(loss);
      opt.step(model.params, nn::gradients(tape, p), frozen);
    }
    out.epoch_loss.push_back(total / static_cast<double>(items.size()));
    if (cfg.on_epoch) cfg.on_epoch(epoch, out.epoch_loss.back());
  }
  return out;
}

Eigen::VectorXd sample_network(const DiffusionModel& model, const PartLabeledObject& object, const std::string& text,
                               std::uint64_t seed) {
  const NoiseSchedule s = model.schedule();
  const PointFeature f_p = encode_points(normalized_points(object, model.denoiser.points), model.params);
  const TextFeature f_l = encode_text(tokenize(text, model.vocab), model.params);
  const Eigen::VectorXd c = fuse_conditions(f_p, f_l, model.params, model.denoiser);
  std::mt19937_64 rng(seed);
  Eigen::VectorXd g = standard_normal(kGraspDim, rng);
  return reverse_process(
      s, std::move(g),
      [&](const Eigen::VectorXd& gt, int t) { return denoise(gt, t, c, model.params, model.denoiser, model.steps); },
      rng);
}

GraspVector sample(const DiffusionModel& model, const PartLabeledObject& object, const std::string& text,
                   std::uint64_t seed) {
  GraspVector g = model.from_network(sample_network(model, object, text, seed));
  g.threshold_fingers();
  return g;
}

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw Error(ErrorKind::kIo, "checkpoint is truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(m(i)));
}

Eigen::MatrixXd get_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = std::bit_cast<double>(get_u64(in));
  return m;
}

json denoiser_json(const DenoiserConfig& c) {
  return {{"feature", c.feature},       {"heads", c.heads},
          {"point_hidden", c.point_hidden}, {"points", c.points},
          {"timestep_embedding", c.timestep_embedding}, {"text_embedding", c.text.embedding},
          {"text_feature", c.text.feature}};
}

DenoiserConfig denoiser_from(const json& j) {
  DenoiserConfig c;
  c.feature = j.at("feature").get<int>();
  c.heads = j.at("heads").get<int>();
  c.point_hidden = j.at("point_hidden").get<int>();
  c.points = j.at("points").get<int>();
  c.timestep_embedding = j.at("timestep_embedding").get<int>();
  c.text.embedding = j.at("text_embedding").get<int>();
  c.text.feature = j.at("text_feature").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const DiffusionModel& model, const std::filesystem::path& path) {
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> tensors;
  Eigen::MatrixXd betas(1, 2);
  betas << model.beta_start, model.beta_end;
  const Eigen::MatrixXd mean = model.mean;
  const Eigen::MatrixXd scale = model.scale;
  tensors.emplace_back("schedule.beta", &betas);
  tensors.emplace_back("norm.mean", &mean);
  tensors.emplace_back("norm.scale", &scale);
  for (std::size_t i = 0; i < model.params.names.size(); ++i) tensors.emplace_back(model.params.names[i], &model.params.values[i]);
  for (std::size_t i = 0; i < model.segnet.names.size(); ++i) tensors.emplace_back(model.segnet.names[i], &model.segnet.values[i]);

  json meta;
  meta["denoiser"] = denoiser_json(model.denoiser);
  meta["steps"] = model.steps;
  meta["text_ablated"] = model.text_ablated;
  meta["vocabulary"] = model.vocab.words;
  meta["segnet_tensors"] = model.segnet.names.size();
  json list = json::array();
  for (const auto& [name, m] : tensors) list.push_back({name, m->rows(), m->cols()});
  meta["tensors"] = list;
  const std::string text = meta.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write checkpoint {}", path.string()));
  out << kCheckpointMagic << '\n';
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, m] : tensors) put_matrix(out, *m);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("failed writing checkpoint {}", path.string()));
}

DiffusionModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kCheckpointMissing, fmt::format("checkpoint not found: {}", path.string()));
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) {
    throw Error(ErrorKind::kCheckpointVersion,
                fmt::format("{} is not a {} checkpoint", path.string(), kCheckpointMagic));
  }
  const std::uint64_t len = get_u64(in);
  if (len > (std::uint64_t{1} << 32)) throw Error(ErrorKind::kIo, "checkpoint metadata length is implausible");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw Error(ErrorKind::kIo, "checkpoint is truncated");
  DiffusionModel m;
  try {
    const json meta = json::parse(text);
    m.denoiser = denoiser_from(meta.at("denoiser"));
    m.steps = meta.at("steps").get<int>();
    m.text_ablated = meta.at("text_ablated").get<bool>();
    m.vocab = Vocabulary::from_words(
        std::vector<std::string>(meta.at("vocabulary").begin() + 1, meta.at("vocabulary").end()));
    const auto seg_count = meta.at("segnet_tensors").get<std::size_t>();
    const auto& list = meta.at("tensors");
    if (list.size() < 3 + seg_count) throw Error(ErrorKind::kIo, "checkpoint tensor list is too short");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto name = list[i].at(0).get<std::string>();
      const auto rows = list[i].at(1).get<Eigen::Index>();
      const auto cols = list[i].at(2).get<Eigen::Index>();
      Eigen::MatrixXd v = get_matrix(in, rows, cols);
      if (i == 0) {
        m.beta_start = v(0);
        m.beta_end = v(1);
      } else if (i == 1) {
        m.mean = v;
      } else if (i == 2) {
        m.scale = v;
      } else if (i >= list.size() - seg_count) {
        m.segnet.add(name, std::move(v));
      } else {
        m.params.add(name, std::move(v));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, fmt::format("checkpoint metadata is malformed: {}", e.what()));
  }
  make_schedule(m.steps, m.beta_start, m.beta_end);
  return m;
}

}  // namespace t2g
