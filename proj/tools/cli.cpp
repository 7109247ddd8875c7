#include "cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "t2g/contact_opt.hpp"
#include "t2g/diffusion.hpp"
#include "t2g/error.hpp"
#include "t2g/metrics.hpp"
#include "t2g/synth_data.hpp"

namespace t2g::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// One generated or refined grasp with the object it belongs to.
struct GraspRecord {
  std::string category;
  std::uint64_t object_seed = 0;
  std::string text;
  std::uint64_t seed = 0;
  GraspVector grasp;
};

json record_to_json(const GraspRecord& r) {
  return {{"category", r.category},
          {"object_seed", r.object_seed},
          {"text", r.text},
          {"seed", r.seed},
          {"grasp", std::vector<double>(r.grasp.values.begin(), r.grasp.values.end())}};
}

GraspRecord record_from_json(const json& j) {
  GraspRecord r;
  r.category = j.at("category").get<std::string>();
  r.object_seed = j.at("object_seed").get<std::uint64_t>();
  r.text = j.at("text").get<std::string>();
  r.seed = j.value("seed", std::uint64_t{0});
  const auto v = j.at("grasp").get<std::vector<double>>();
  if (v.size() != kGraspDim) throw Error(ErrorKind::kInvalidInput, fmt::format("grasp has {} values, expected {}", v.size(), kGraspDim));
  r.grasp = GraspVector(std::span<const double>(v));
  return r;
}

void write_grasps(const std::vector<GraspRecord>& records, const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, fmt::format("cannot write {}", path.string()));
  for (const auto& r : records) f << record_to_json(r).dump() << '\n';
  if (!f) throw Error(ErrorKind::kIo, fmt::format("failed writing {}", path.string()));
}

std::vector<GraspRecord> read_grasps(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, fmt::format("cannot read {}", path.string()));
  std::vector<GraspRecord> out;
  std::string line;
  for (int n = 1; std::getline(f, line); ++n) {
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kInvalidInput, fmt::format("{}:{}: {}", path.string(), n, e.what()));
    }
  }
  return out;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw Error(ErrorKind::kInvalidInput, fmt::format("{} path is required", what));
  if (!fs::is_regular_file(path)) throw Error(ErrorKind::kIo, fmt::format("{} '{}' does not exist", what, path));
}

void require_checkpoint(const std::string& path) {
  if (path.empty()) throw Error(ErrorKind::kInvalidInput, "checkpoint path is required");
  if (!fs::is_regular_file(path)) throw Error(ErrorKind::kCheckpointMissing, fmt::format("checkpoint '{}' not found", path));
}

// Fails early when the output cannot be created.
void require_writable(const std::string& path) {
  if (path.empty()) throw Error(ErrorKind::kInvalidInput, "output path is required");
  const fs::path p(path);
  const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorKind::kIo, fmt::format("output directory '{}' does not exist", dir.string()));
  if (fs::is_directory(p, ec)) throw Error(ErrorKind::kIo, fmt::format("output '{}' is a directory", path));
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    for (std::string s; std::getline(ss, s, ',');) {
      if (!s.empty()) out.push_back(s);
    }
  }
  return out;
}

// "category:seed"
std::pair<std::string, std::uint64_t> parse_object_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size()) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("object spec '{}' is not category:seed", spec));
  }
  try {
    std::size_t used = 0;
    const auto seed = std::stoull(spec.substr(colon + 1), &used);
    if (used != spec.size() - colon - 1) throw std::invalid_argument("trailing");
    return {spec.substr(0, colon), seed};
  } catch (const std::exception&) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("object spec '{}' has a bad seed", spec));
  }
}

// Objects keyed by (category, seed); dataset objects win over regeneration.
class ObjectStore {
 public:
  void add(const PartLabeledObject& o) { objects_.emplace(std::make_pair(o.category, o.seed), o); }
  const PartLabeledObject& get(const std::string& category, std::uint64_t seed) {
    const auto key = std::make_pair(category, seed);
    auto it = objects_.find(key);
    if (it == objects_.end()) it = objects_.emplace(key, generate_object(category, seed)).first;
    return it->second;
  }

 private:
  std::map<std::pair<std::string, std::uint64_t>, PartLabeledObject> objects_;
};

struct Options {
  // gen-data
  std::vector<std::string> categories;
  int objects_per_category = 5;
  int grasps_per_object = 4;
  int paraphrases = 4;
  std::string out;
  std::uint64_t seed = 0;
  // train
  std::string data;
  std::string out_ckpt;
  int epochs = 1000;
  int batch_size = 64;
  double learning_rate = 1e-4;
  int steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int feature = 64;
  int heads = 2;
  int point_hidden = 64;
  int points = 256;
  bool ablate_text = false;
  int segnet_steps = 1500;
  std::string loss_log;
  // sample
  std::string ckpt;
  std::vector<std::string> object_specs;
  std::string text;
  std::string part;
  int n = 20;
  // optimize
  std::string grasps;
  std::string seg_mode = "oracle";
  OptConfig opt;
  std::string trace_dir;
  // eval
  std::string objects;
  std::string dataset;
  std::string report;
  MetricsConfig metrics;
  // export-mesh
  std::string grasp_file;
  int index = 0;
};

int cmd_gen_data(const Options& o, std::ostream& out) {
  require_writable(o.out);
  GenDataConfig cfg;
  cfg.categories = split_list(o.categories);
  if (cfg.categories.empty()) cfg.categories = object_categories();
  for (const auto& c : cfg.categories) {
    if (std::find(object_categories().begin(), object_categories().end(), c) == object_categories().end()) {
      throw Error(ErrorKind::kInvalidInput, fmt::format("unknown category '{}'; valid categories: {}", c,
                                                        fmt::join(object_categories(), ", ")));
    }
  }
  cfg.objects_per_category = o.objects_per_category;
  cfg.grasps_per_object = o.grasps_per_object;
  cfg.paraphrases = o.paraphrases;
  cfg.seed = o.seed;
  const auto records = generate_dataset(cfg);
  write_dataset(records, o.out);
  std::map<std::string, int> parts;
  std::size_t grasps = 0;
  for (const auto& r : records) {
    grasps += r.samples.size();
    for (const auto& s : r.samples) ++parts[r.object.category + "/" + r.object.part_names[s.part_label]];
  }
  out << fmt::format("objects {}\ngrasps {}\n", records.size(), grasps);
  for (const auto& [name, count] : parts) out << fmt::format("part {} {}\n", name, count);
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  require_file(o.data, "dataset");
  require_writable(o.out_ckpt);
  if (!o.loss_log.empty()) require_writable(o.loss_log);
  const auto data = read_dataset(o.data);
  if (data.empty()) throw Error(ErrorKind::kInvalidInput, "dataset is empty");
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.learning_rate = o.learning_rate;
  cfg.steps = o.steps;
  cfg.beta_start = o.beta_start;
  cfg.beta_end = o.beta_end;
  cfg.seed = o.seed;
  cfg.ablate_text = o.ablate_text;
  cfg.denoiser.feature = o.feature;
  cfg.denoiser.heads = o.heads;
  cfg.denoiser.point_hidden = o.point_hidden;
  cfg.denoiser.points = o.points;
  TrainResult result = train(data, cfg);
  if (o.segnet_steps > 0) {
    std::vector<PartLabeledObject> objects;
    for (const auto& r : data) objects.push_back(r.object);
    SegNetConfig seg;
    seg.steps = o.segnet_steps;
    seg.seed = derive_seed(o.seed, 0x736567ull);
    result.model.segnet = train_segnet(segmentation_examples(objects, seg.seed), seg, result.model.vocab).params;
  }
  save_checkpoint(result.model, o.out_ckpt);
  if (!o.loss_log.empty()) {
    std::ofstream f(o.loss_log, std::ios::binary);
    f << "epoch,loss\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) f << fmt::format("{},{:.17g}\n", e, result.epoch_loss[e]);
  }
  out << fmt::format("epochs {}\nfinal_loss {:.6g}\ncheckpoint {}\n", result.epoch_loss.size(),
                     result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back(), o.out_ckpt);
  return 0;
}

int cmd_sample(const Options& o, std::ostream& out) {
  require_checkpoint(o.ckpt);
  require_writable(o.out);
  if (o.object_specs.empty()) throw Error(ErrorKind::kInvalidInput, "at least one --object-spec is required");
  if (o.text.empty() == o.part.empty()) throw Error(ErrorKind::kInvalidInput, "give exactly one of --text and --part");
  if (o.n < 1) throw Error(ErrorKind::kInvalidInput, "--n must be positive");
  const DiffusionModel model = load_checkpoint(o.ckpt);
  std::vector<GraspRecord> records;
  const auto specs = split_list(o.object_specs);
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto [category, object_seed] = parse_object_spec(specs[k]);
    const PartLabeledObject obj = generate_object(category, object_seed);
    const std::string text = o.text.empty() ? template_text(category, o.part) : o.text;
    // Fail before sampling when the prompt names no part of this object.
    segment_by_text(obj, text, SegMode::kOracle);
    for (int i = 0; i < o.n; ++i) {
      GraspRecord r{category, object_seed, text, derive_seed(o.seed, k + 1, static_cast<std::uint64_t>(i)), {}};
      r.grasp = sample(model, obj, text, r.seed);
      records.push_back(std::move(r));
    }
  }
  write_grasps(records, o.out);
  out << fmt::format("grasps {}\nobjects {}\n", records.size(), specs.size());
  return 0;
}

int cmd_optimize(const Options& o, std::ostream& out, std::ostream& err) {
  require_file(o.grasps, "grasp file");
  require_writable(o.out);
  SegMode mode;
  if (o.seg_mode == "oracle") {
    mode = SegMode::kOracle;
  } else if (o.seg_mode == "learned") {
    mode = SegMode::kLearned;
  } else {
    throw Error(ErrorKind::kInvalidInput, fmt::format("--seg-mode must be oracle or learned, not '{}'", o.seg_mode));
  }
  o.opt.validate();
  DiffusionModel model;
  if (mode == SegMode::kLearned) {
    require_checkpoint(o.ckpt);
    model = load_checkpoint(o.ckpt);
    if (model.segnet.values.empty()) throw Error(ErrorKind::kInvalidInput, "checkpoint has no trained segmentation network");
  }
  if (!o.trace_dir.empty() && !fs::is_directory(o.trace_dir)) {
    throw Error(ErrorKind::kIo, fmt::format("trace directory '{}' does not exist", o.trace_dir));
  }
  auto records = read_grasps(o.grasps);
  ObjectStore store;
  int skipped = 0, aborted = 0;
  double before = 0.0, after = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    const auto& obj = store.get(r.category, r.object_seed);
    const RefineResult res = refine(r.grasp, obj, r.text, o.opt, mode, mode == SegMode::kLearned ? &model.segnet : nullptr,
                                    HandTemplate::standard());
    for (const auto& w : res.warnings) err << fmt::format("warning: grasp {}: {}\n", i, w);
    skipped += res.target_skipped;
    aborted += res.aborted;
    before += res.initial_objective;
    after += res.best_objective;
    if (!o.trace_dir.empty()) write_trace_csv(res.trace, fs::path(o.trace_dir) / fmt::format("trace_{:05d}.csv", i));
    r.grasp = res.grasp;
  }
  write_grasps(records, o.out);
  const double n = records.empty() ? 1.0 : static_cast<double>(records.size());
  out << fmt::format("grasps {}\nmean_objective_before {:.6g}\nmean_objective_after {:.6g}\n", records.size(),
                     before / n, after / n);
  if (skipped) out << fmt::format("empty_target_segmentations {}\n", skipped);
  if (aborted) out << fmt::format("aborted {}\n", aborted);
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (o.grasps.empty() == o.dataset.empty()) throw Error(ErrorKind::kInvalidInput, "give exactly one of --grasps and --dataset");
  if (!o.grasps.empty()) require_file(o.grasps, "grasp file");
  if (!o.dataset.empty()) require_file(o.dataset, "dataset");
  if (!o.objects.empty()) require_file(o.objects, "object dataset");
  require_writable(o.report);

  ObjectStore store;
  std::vector<PartLabeledObject> objects;
  std::map<std::pair<std::string, std::uint64_t>, int> index;
  auto object_index = [&](const std::string& category, std::uint64_t seed) {
    const auto key = std::make_pair(category, seed);
    auto it = index.find(key);
    if (it != index.end()) return it->second;
    objects.push_back(store.get(category, seed));
    return index[key] = static_cast<int>(objects.size()) - 1;
  };
  std::vector<GraspQuery> queries;
  if (!o.dataset.empty()) {
    // Ground-truth grasps with their template texts.
    for (const auto& rec : read_dataset(o.dataset)) {
      store.add(rec.object);
      const int k = object_index(rec.object.category, rec.object.seed);
      for (const auto& s : rec.samples) queries.push_back({s.grasp, s.template_text, k});
    }
  } else {
    if (!o.objects.empty()) {
      for (const auto& rec : read_dataset(o.objects)) store.add(rec.object);
    }
    for (const auto& r : read_grasps(o.grasps)) queries.push_back({r.grasp, r.text, object_index(r.category, r.object_seed)});
  }
  const MetricsReport rep = evaluate(queries, objects, o.metrics);
  write_report(rep, o.report);
  out << fmt::format(
      "grasps {}\npenetration_depth_cm {:.4f}\nintersection_volume_cm3 {:.4f}\ndisplacement_cm {:.4f} +- {:.4f}\n"
      "diversity_entropy {:.4f}\nmean_cluster_size {:.4f}\npart_accuracy_percent {:.2f}\n",
      rep.grasp_count, rep.penetration_depth_cm, rep.intersection_volume_cm3, rep.displacement_mean_cm,
      rep.displacement_var, rep.diversity_entropy, rep.mean_cluster_size, rep.part_accuracy_percent);
  for (const auto& f : rep.flags) out << "flag " << f << '\n';
  return 0;
}

int cmd_export_mesh(const Options& o, std::ostream& out) {
  require_file(o.grasp_file, "grasp file");
  require_writable(o.out);
  const auto records = read_grasps(o.grasp_file);
  if (o.index < 0 || static_cast<std::size_t>(o.index) >= records.size()) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("--index {} outside the {} grasps in the file", o.index, records.size()));
  }
  GraspRecord r = records[static_cast<std::size_t>(o.index)];
  if (!o.object_specs.empty()) std::tie(r.category, r.object_seed) = parse_object_spec(o.object_specs.front());
  const PartLabeledObject obj = generate_object(r.category, r.object_seed);
  const HandSurface surface = hand_surface(r.grasp, obj.centroid, HandTemplate::standard());
  const std::string ext = fs::path(o.out).extension().string();
  if (ext == ".obj") {
    write_obj(surface, o.out);
  } else if (ext == ".ply") {
    write_ply(surface, o.out);
  } else {
    throw Error(ErrorKind::kInvalidInput, fmt::format("output must end in .obj or .ply, got '{}'", o.out));
  }
  out << fmt::format("wrote {}\n", o.out);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Part-level text-guided grasp synthesis"};
  app.name("t2g");
  app.set_config("--config", "", "INI file; [section] per command, keys are long flag names");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic part-labelled grasp dataset (JSONL)");
  gen->add_option("--categories", o.categories, "Comma-separated categories (default: all)");
  gen->add_option("--objects-per-category", o.objects_per_category)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--grasps-per-object", o.grasps_per_object)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--paraphrases", o.paraphrases)->capture_default_str()->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", o.seed, "Master seed")->capture_default_str();
  gen->add_option("--out", o.out, "Output JSONL")->required();

  auto* tr = app.add_subcommand("train", "Train the conditional diffusion model");
  tr->add_option("--data", o.data, "Dataset JSONL")->required();
  tr->add_option("--out-ckpt", o.out_ckpt, "Checkpoint to write")->required();
  tr->add_option("--epochs", o.epochs)->capture_default_str()->check(CLI::NonNegativeNumber);
  tr->add_option("--batch-size", o.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--learning-rate", o.learning_rate)->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--steps", o.steps, "Diffusion steps T")->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--beta-start", o.beta_start)->capture_default_str();
  tr->add_option("--beta-end", o.beta_end)->capture_default_str();
  tr->add_option("--feature", o.feature, "Denoiser feature width")->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--heads", o.heads)->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--point-hidden", o.point_hidden)->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--points", o.points, "Object points fed to the encoder")->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_flag("--ablate-text", o.ablate_text, "Hold the text value projection at zero");
  tr->add_option("--segnet-steps", o.segnet_steps, "Segmentation network steps (0 skips it)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  tr->add_option("--loss-log", o.loss_log, "Optional per-epoch loss CSV");
  tr->add_option("--seed", o.seed)->capture_default_str();

  auto* sm = app.add_subcommand("sample", "Sample grasps for objects and a text prompt");
  sm->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  sm->add_option("--object-spec", o.object_specs, "category:seed, repeatable or comma-separated")->required();
  sm->add_option("--text", o.text, "Prompt naming a part");
  sm->add_option("--part", o.part, "Part name; uses the template prompt");
  sm->add_option("--n", o.n, "Grasps per object")->capture_default_str();
  sm->add_option("--seed", o.seed)->capture_default_str();
  sm->add_option("--out", o.out, "Output grasp JSONL")->required();

  auto* op = app.add_subcommand("optimize", "Refine grasps with text-guided contact optimization");
  op->add_option("--grasps", o.grasps, "Input grasp JSONL")->required();
  op->add_option("--ckpt", o.ckpt, "Checkpoint holding the segmentation network (learned mode)");
  op->add_option("--seg-mode", o.seg_mode, "oracle or learned")->capture_default_str();
  op->add_option("--out", o.out, "Output grasp JSONL")->required();
  op->add_option("--epochs", o.opt.epochs)->capture_default_str();
  op->add_option("--lambda-target", o.opt.lambda_target)->capture_default_str();
  op->add_option("--lambda-other", o.opt.lambda_other)->capture_default_str();
  op->add_option("--lambda-contact", o.opt.lambda_contact)->capture_default_str();
  op->add_option("--lambda-penetration", o.opt.lambda_penetration)->capture_default_str();
  op->add_option("--lambda-angle", o.opt.lambda_angle)->capture_default_str();
  op->add_option("--lambda-self", o.opt.lambda_self)->capture_default_str();
  op->add_option("--lr-pose", o.opt.lr_pose)->capture_default_str();
  op->add_option("--lr-shape", o.opt.lr_shape)->capture_default_str();
  op->add_option("--lr-offset", o.opt.lr_offset, "cm per step")->capture_default_str();
  op->add_option("--trace-dir", o.trace_dir, "Directory for per-grasp objective traces");

  auto* ev = app.add_subcommand("eval", "Compute the evaluation metrics");
  ev->add_option("--grasps", o.grasps, "Grasp JSONL to evaluate");
  ev->add_option("--dataset", o.dataset, "Evaluate a dataset's own ground-truth grasps");
  ev->add_option("--objects", o.objects, "Dataset JSONL supplying the objects");
  ev->add_option("--report", o.report, "Report JSON; a CSV is written next to it")->required();
  ev->add_option("--voxel-size", o.metrics.voxel_size)->capture_default_str()->check(CLI::PositiveNumber);
  ev->add_option("--clusters", o.metrics.clusters)->capture_default_str()->check(CLI::PositiveNumber);
  ev->add_option("--restarts", o.metrics.restarts)->capture_default_str()->check(CLI::PositiveNumber);
  ev->add_option("--sim-horizon", o.metrics.sim.horizon)->capture_default_str();
  ev->add_option("--sim-dt", o.metrics.sim.dt)->capture_default_str()->check(CLI::PositiveNumber);
  ev->add_option("--sim-mass", o.metrics.sim.mass)->capture_default_str()->check(CLI::PositiveNumber);
  ev->add_option("--seed", o.metrics.seed)->capture_default_str();

  auto* ex = app.add_subcommand("export-mesh", "Write one grasp's hand as OBJ or PLY");
  ex->add_option("--grasp", o.grasp_file, "Grasp JSONL")->required();
  ex->add_option("--index", o.index, "Record in the file")->capture_default_str();
  ex->add_option("--object", o.object_specs, "Override the object as category:seed");
  ex->add_option("--out", o.out, "Output .obj or .ply")->required();

  std::vector<std::string> argv_store{"t2g"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::FileError& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kIo);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kInvalidInput);
  }

  try {
    if (*gen) return cmd_gen_data(o, out);
    if (*tr) return cmd_train(o, out);
    if (*sm) return cmd_sample(o, out);
    if (*op) return cmd_optimize(o, out, err);
    if (*ev) return cmd_eval(o, out);
    if (*ex) return cmd_export_mesh(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kIo);
  }
  return static_cast<int>(ErrorKind::kInvalidInput);
}

}  // namespace t2g::cli
