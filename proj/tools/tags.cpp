// tags: command-line front end for the TAGS detector.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tags/tags.hpp"

namespace fs = std::filesystem;
using tags::json;

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 7;
  bool seed_set = false;
  std::size_t workers = 1;
  bool workers_set = false;
  std::string out;
};

tags::RunConfig load_run_config(const Options& o, json* raw = nullptr) {
  json j = json::object();
  if (!o.config.empty()) j = tags::detail::parse_json(tags::read_file(o.config), o.config);
  if (raw) *raw = j;
  tags::RunConfig c = tags::run_config_from_json(j);
  if (o.seed_set) c.train.seed = o.seed;
  if (o.workers_set) c.workers = o.workers;
  return c;
}

std::vector<double> parse_tious(const std::string& text) {
  if (text == "activitynet") return tags::activitynet_tious();
  if (text == "thumos") return tags::thumos_tious();
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw tags::ValidationError("--tious: cannot parse '" + item + "'");
    }
    if (!(out.back() > 0.0 && out.back() <= 1.0)) throw tags::ValidationError("--tious: values must lie in (0,1]");
  }
  if (out.empty()) throw tags::ValidationError("--tious: empty grid");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  tags::write_file(path, text);
}

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw tags::ValidationError("--out is required");
  fs::create_directories(o.out);
  return o.out;
}

// synth ----------------------------------------------------------------------

struct SynthArgs {
  tags::SyntheticSpec spec;
};

int run_synth(const Options& o, SynthArgs a) {
  if (o.seed_set) a.spec.seed = o.seed;
  const fs::path out = require_out(o);
  const tags::Dataset data = tags::generate_synthetic(a.spec);
  tags::save_dataset(data, out);
  std::cout << "wrote " << data.features.size() << " videos to " << out.string() << "\n";
  return 0;
}

// train ----------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string subset = "train";
  int epochs = 0;
};

int run_train(const Options& o, const TrainArgs& a) {
  json raw;
  tags::RunConfig c = load_run_config(o, &raw);
  if (a.epochs > 0) c.train.epochs = a.epochs;
  const std::string data_dir = !a.data.empty() ? a.data : c.paths.data;
  if (data_dir.empty()) throw tags::ValidationError("train: --data is required");
  const tags::Dataset data = tags::load_dataset(data_dir, a.subset);
  if (data.features.empty()) throw tags::ValidationError("train: no videos in subset '" + a.subset + "'");

  // Shape-bearing fields default to the dataset unless the config sets them.
  const json model = raw.contains("model") ? raw["model"] : json::object();
  if (!model.contains("input_dim")) c.train.model.input_dim = data.features.front().dim();
  if (!model.contains("snippets")) c.train.model.snippets = data.features.front().length();
  if (!model.contains("num_classes")) c.train.model.num_classes = data.annotations.classes.size();
  c.validate();

  const fs::path out = require_out(o);
  const auto samples = tags::make_samples(data, c.train.model);
  tags::TrainOptions opts;
  opts.workers = c.workers;
  opts.checkpoint = out / "checkpoint.tagc";
  opts.on_epoch = [&](const tags::EpochMetrics& m) {
    std::printf("epoch %d  L_c %.6f  L_m %.6f  L_pp %.6f  L_fc %.6f  total %.6f\n", m.epoch, m.terms.classification,
                m.terms.mask, m.terms.promotion, m.terms.consistency, m.total());
    std::fflush(stdout);
  };
  write_text(out / "config.json", tags::to_json(c).dump(2) + "\n");
  const tags::TrainResult result = tags::train(samples, c.train, opts);
  write_text(out / "metrics.csv", tags::metrics_csv(result.history));
  std::cout << "checkpoint " << opts.checkpoint.string() << "\n";
  return 0;
}

// infer ----------------------------------------------------------------------

struct InferArgs {
  std::string checkpoint;
  std::string data;
  std::string subset;
};

int run_infer(const Options& o, const InferArgs& a) {
  const tags::RunConfig c = load_run_config(o);
  c.inference.validate();
  const std::string ck_path = !a.checkpoint.empty() ? a.checkpoint : c.paths.checkpoint;
  const std::string data_dir = !a.data.empty() ? a.data : c.paths.data;
  if (ck_path.empty() || data_dir.empty()) throw tags::ValidationError("infer: --checkpoint and --data are required");
  const tags::Checkpoint ck = tags::read_checkpoint(ck_path);
  const tags::Dataset data = tags::load_dataset(data_dir, a.subset);
  const fs::path out = require_out(o);
  const tags::PredictionSet preds = tags::predict_dataset(ck.params, ck.config.model, c.inference, data);
  tags::write_predictions(preds, out / "predictions.json");
  std::size_t n = 0;
  for (const auto& [id, d] : preds) n += d.size();
  std::cout << "wrote " << n << " detections for " << preds.size() << " videos to "
            << (out / "predictions.json").string() << "\n";
  return 0;
}

// eval / profile-fp ------------------------------------------------------------

struct EvalArgs {
  std::string preds;
  std::string gt;
  std::string tious = "activitynet";
  std::string subset;
  double tiou = 0.5;
  std::size_t max_multiple = 10;
};

tags::AnnotationSet load_gt(const EvalArgs& a) {
  tags::AnnotationSet gt = tags::read_annotations(a.gt);
  if (!a.subset.empty()) {
    for (auto it = gt.videos.begin(); it != gt.videos.end();)
      it = it->second.subset == a.subset ? std::next(it) : gt.videos.erase(it);
  }
  return gt;
}

int run_eval(const Options& o, const EvalArgs& a) {
  const auto grid = parse_tious(a.tious);
  const tags::EvalReport rep = tags::map_report(tags::read_predictions(a.preds), load_gt(a), grid);
  std::cout << rep.to_json().dump(2) << "\n";
  if (!o.out.empty()) {
    const fs::path out = require_out(o);
    write_text(out / "report.json", rep.to_json().dump(2) + "\n");
    write_text(out / "map.csv", rep.map_csv());
    write_text(out / "per_class_ap.csv", rep.class_csv());
  }
  return 0;
}

int run_profile(const Options& o, const EvalArgs& a) {
  const tags::FpProfile prof = tags::fp_profile(tags::read_predictions(a.preds), load_gt(a), a.tiou, a.max_multiple);
  std::cout << prof.to_json().dump(2) << "\n";
  if (!o.out.empty()) {
    const fs::path out = require_out(o);
    write_text(out / "fp_profile.json", prof.to_json().dump(2) + "\n");
    write_text(out / "fp_profile.csv", prof.csv());
  }
  return 0;
}

// gradcheck ------------------------------------------------------------------

struct GradcheckArgs {
  std::size_t configs = 20;
  std::size_t coords = 2;
};

int run_gradcheck(const Options& o, const GradcheckArgs& a) {
  tags::GradcheckOptions opt;
  opt.coords_per_tensor = a.coords;
  if (a.configs < 1) throw tags::ValidationError("--configs must be >= 1");
  const tags::GradcheckSummary s = tags::run_gradcheck(o.seed, a.configs, opt);
  const double tolerance = 1e-4;
  bool ok = true;
  for (const auto& [term, r] : s.terms) {
    std::printf("%-6s max_rel_err %.3e  checked %zu  skipped_ties %zu  worst %s\n",
                tags::loss_term_name(term).c_str(), r.max_rel_error, r.checked, r.skipped_ties, r.worst.c_str());
    ok = ok && r.max_rel_error <= tolerance;
  }
  std::printf("%s (tolerance %.0e, %zu configurations)\n", ok ? "PASS" : "FAIL", tolerance, a.configs);
  return ok ? 0 : 2;
}

// simdump --------------------------------------------------------------------

struct SimdumpArgs {
  std::string checkpoint;
  std::string features;
};

int run_simdump(const Options& o, const SimdumpArgs& a) {
  if (a.checkpoint.empty() || a.features.empty())
    throw tags::ValidationError("simdump: --checkpoint and --features are required");
  const tags::Checkpoint ck = tags::read_checkpoint(a.checkpoint);
  if (ck.config.model.scales.front() != 1) throw tags::ValidationError("simdump: model has no base scale");
  const tags::Matrix features = tags::read_matrix(a.features);
  const auto outputs = tags::forward(ck.params, ck.config.model, features);
  const fs::path out = require_out(o);
  const fs::path path = out / (fs::path(a.features).stem().string() + "_similarity.tagf");
  tags::write_matrix(tags::cosine_similarity(outputs.front().embedding), path);
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

void add_common(CLI::App* cmd, Options& o, bool with_config) {
  cmd->add_option("--seed", o.seed, "Seed for all randomness")->each([&](const std::string&) { o.seed_set = true; });
  cmd->add_option("--out", o.out, "Output directory");
  if (with_config) {
    cmd->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--workers", o.workers, "Worker threads")
        ->check(CLI::PositiveNumber)
        ->each([&](const std::string&) { o.workers_set = true; });
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TAGS temporal action detection"};
  app.require_subcommand(1);
  Options opt;

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
  add_common(c_synth, opt, false);
  c_synth->add_option("--videos", synth.spec.num_videos, "Training videos");
  c_synth->add_option("--val-videos", synth.spec.num_val_videos, "Held-out videos");
  c_synth->add_option("--classes", synth.spec.num_classes, "Action classes");
  c_synth->add_option("--snippets", synth.spec.snippets, "Snippets per video");
  c_synth->add_option("--dim", synth.spec.dim, "Feature dimension");
  c_synth->add_option("--noise", synth.spec.noise_sigma, "Gaussian noise sigma");
  c_synth->add_option("--min-len", synth.spec.min_len, "Shortest instance in snippets");
  c_synth->add_option("--max-len", synth.spec.max_len, "Longest instance in snippets");
  c_synth->add_option("--max-instances", synth.spec.max_instances, "Instances per video");
  c_synth->add_option("--min-gap", synth.spec.min_gap, "Background gap between instances");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_common(c_train, opt, true);
  c_train->add_option("--data", train.data, "Dataset directory");
  c_train->add_option("--subset", train.subset, "Annotation subset to train on");
  c_train->add_option("--epochs", train.epochs, "Override the configured epoch count");

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "Write predictions for a dataset");
  add_common(c_infer, opt, true);
  c_infer->add_option("--checkpoint", infer.checkpoint, "Checkpoint file");
  c_infer->add_option("--data", infer.data, "Dataset directory");
  c_infer->add_option("--subset", infer.subset, "Annotation subset (all when omitted)");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "mAP report over a tIoU grid");
  add_common(c_eval, opt, false);
  c_eval->add_option("--preds", eval.preds, "Predictions JSON")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--gt", eval.gt, "Annotations JSON")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--tious", eval.tious, "Comma list, 'activitynet' or 'thumos'");
  c_eval->add_option("--subset", eval.subset, "Restrict to one annotation subset");

  EvalArgs prof;
  auto* c_prof = app.add_subcommand("profile-fp", "False-positive profile over 1G..10G budgets");
  add_common(c_prof, opt, false);
  c_prof->add_option("--preds", prof.preds, "Predictions JSON")->required()->check(CLI::ExistingFile);
  c_prof->add_option("--gt", prof.gt, "Annotations JSON")->required()->check(CLI::ExistingFile);
  c_prof->add_option("--tiou", prof.tiou, "tIoU threshold for a true positive");
  c_prof->add_option("--max-multiple", prof.max_multiple, "Largest budget multiple of G");
  c_prof->add_option("--subset", prof.subset, "Restrict to one annotation subset");

  GradcheckArgs grad;
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference check of every loss term");
  add_common(c_grad, opt, false);
  c_grad->add_option("--configs", grad.configs, "Random configurations");
  c_grad->add_option("--coords", grad.coords, "Coordinates per tensor");

  SimdumpArgs sim;
  auto* c_sim = app.add_subcommand("simdump", "Cosine similarity of base-scale embeddings");
  add_common(c_sim, opt, false);
  c_sim->add_option("--checkpoint", sim.checkpoint, "Checkpoint file")->check(CLI::ExistingFile);
  c_sim->add_option("--features", sim.features, "Feature file (TAGF)")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*c_synth) return run_synth(opt, synth);
    if (*c_train) return run_train(opt, train);
    if (*c_infer) return run_infer(opt, infer);
    if (*c_eval) return run_eval(opt, eval);
    if (*c_prof) return run_profile(opt, prof);
    if (*c_grad) return run_gradcheck(opt, grad);
    if (*c_sim) return run_simdump(opt, sim);
  } catch (const tags::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
