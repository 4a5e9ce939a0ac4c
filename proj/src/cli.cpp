#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "pinf/app.hpp"
#include "pinf/captions.hpp"
#include "pinf/corpus.hpp"
#include "pinf/features.hpp"
#include "pinf/image.hpp"
#include "pinf/pipeline_json.hpp"

namespace pinf {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct CorpusSplits {
  AnnotatedCorpus train;
  AnnotatedCorpus val_pool;
  AnnotatedCorpus val;
  AnnotatedCorpus test;
};

// The validation pool is halved with the seed recorded in val.json.
CorpusSplits load_splits(const std::string& dir) {
  CorpusSplits s;
  s.train = load_annotations((fs::path(dir) / "train.json").string());
  s.val_pool = load_annotations((fs::path(dir) / "val.json").string());
  ValidationSplit halves = split_validation(s.val_pool, s.val_pool.seed);
  s.val = std::move(halves.val);
  s.test = std::move(halves.test);
  return s;
}

const AnnotatedCorpus& pick_split(const CorpusSplits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw Error("unknown split \"" + name + "\" (expected train, val or test)");
}

// Per-image features in entry order. Images are independent, so the thread
// count does not affect the result.
std::vector<FeatureVector> corpus_features(const AnnotatedCorpus& corpus) {
  const std::size_t n = corpus.entries.size();
  std::vector<FeatureVector> out(n);
  std::vector<std::string> errors(n);
  const std::size_t threads = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 16);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) {
        try {
          const auto& e = corpus.entries[i];
          out[i] = extract_features(upscale_to_feature_minimum(decode_image(read_file_bytes(corpus.image_path(e)))));
        } catch (const std::exception& ex) {
          errors[i] = ex.what();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) throw Error("image " + corpus.entries[i].annotation.image_id + ": " + errors[i]);
  }
  return out;
}

std::vector<Example> make_examples(const AnnotatedCorpus& corpus) {
  const auto features = corpus_features(corpus);
  std::vector<Example> out;
  out.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const QualityAnnotation& a = corpus.entries[i].annotation;
    Example ex{features[i], {}};
    ex.target[0] = a.unrecognizable.value();
    for (FlawKind k : kAllFlaws) ex.target[1 + flaw_index(k)] = a.flaws[k].value();
    out.push_back(ex);
  }
  return out;
}

std::vector<QualityPrediction> corpus_predictions(const Model& model, const AnnotatedCorpus& corpus) {
  std::vector<QualityPrediction> out;
  for (const FeatureVector& f : corpus_features(corpus)) out.push_back(predict_features(model, f));
  return out;
}

ScoredLabels detection_data(const std::vector<QualityPrediction>& preds, const AnnotatedCorpus& corpus) {
  ScoredLabels d;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    d.scores.push_back(preds[i].unrecognizable_hat);
    d.labels.push_back(binarize_ground_truth(corpus.entries[i].annotation));
  }
  return d;
}

void emit(std::ostream& out, bool as_json, const json& report, const std::string& text) {
  if (as_json) {
    out << report.dump(1) << "\n";
  } else {
    out << text;
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

void write_jsonl(const std::string& path, const std::vector<json>& rows) {
  std::ofstream out(path, std::ios::binary);
  for (const json& r : rows) out << r.dump() << "\n";
  if (!out) throw Error("cannot write " + path);
}

// ---------------------------------------------------------------- commands

int cmd_gen_corpus(const std::string& out_dir, std::size_t count, std::uint64_t seed, bool as_json,
                   std::ostream& out) {
  const GeneratedCorpus g = generate_corpus(count, seed, out_dir);
  const ValidationSplit halves = split_validation(g.val_pool, g.val_pool.seed);
  std::size_t poor = 0;
  for (const auto* c : {&g.train, &g.val_pool}) {
    for (const auto& e : c->entries) poor += binarize_ground_truth(e.annotation);
  }
  json report{{"command", "gen-corpus"}, {"count", count}, {"seed", seed},
              {"train", g.train.entries.size()}, {"val", halves.val.entries.size()},
              {"test", halves.test.entries.size()}, {"poor", poor}};
  emit(out, as_json, report,
       "generated " + std::to_string(count) + " images: train " + std::to_string(g.train.entries.size()) +
           ", val " + std::to_string(halves.val.entries.size()) + ", test " +
           std::to_string(halves.test.entries.size()) + ", poor " + std::to_string(poor) + "\n");
  return 0;
}

int cmd_train(const std::string& corpus_dir, const std::string& model_out, const TrainConfig& cfg, bool as_json,
              std::ostream& out) {
  cfg.validate();
  const CorpusSplits s = load_splits(corpus_dir);
  const auto train_set = make_examples(s.train);
  const auto val_set = make_examples(s.val);
  const TrainResult r = train(train_set, val_set, cfg);
  save_model(r.model, model_out);
  const double best = r.history.val_loss.at(r.history.best_epoch - 1);
  json report{{"command", "train"},
              {"train_size", train_set.size()},
              {"val_size", val_set.size()},
              {"seed", cfg.seed},
              {"learning_rate", cfg.learning_rate},
              {"single_task", cfg.single_task},
              {"initial_val_loss", r.history.initial_val_loss},
              {"epochs_run", r.history.stop_epoch},
              {"best_epoch", r.history.best_epoch},
              {"best_val_loss", best},
              {"stopped_early", r.history.stopped_early},
              {"val_loss", r.history.val_loss},
              {"train_loss", r.history.train_loss}};
  emit(out, as_json, report,
       "trained on " + std::to_string(train_set.size()) + " images; " + std::to_string(r.history.stop_epoch) +
           " epochs, best epoch " + std::to_string(r.history.best_epoch) + ", val loss " +
           fixed(r.history.initial_val_loss) + " -> " + fixed(best) + (r.history.stopped_early ? " (early stop)" : "") +
           "\n");
  return 0;
}

int cmd_calibrate(const std::string& corpus_dir, const std::string& model_path, const std::string& calib_out,
                  double feedback_threshold, bool as_json, std::ostream& out) {
  const CorpusSplits s = load_splits(corpus_dir);
  const Model model = load_model(model_path);
  const ScoredLabels d = detection_data(corpus_predictions(model, s.val), s.val);
  Calibration c = select_threshold(d);
  c.flaw_feedback_threshold = feedback_threshold;
  c.seed = s.val_pool.seed;
  save_calibration(c, calib_out);
  json report{{"command", "calibrate"},
              {"val_size", d.size()},
              {"tau_unrecognizable", c.tau_unrecognizable},
              {"flaw_feedback_threshold", c.flaw_feedback_threshold},
              {"precision", c.val_precision},
              {"recall", c.val_recall},
              {"auc_roc", c.val_auc_roc},
              {"auc_pr", c.val_auc_pr}};
  emit(out, as_json, report,
       "tau " + fixed(c.tau_unrecognizable) + " on " + std::to_string(d.size()) + " validation images: precision " +
           fixed(c.val_precision) + ", recall " + fixed(c.val_recall) + "\n");
  return 0;
}

int cmd_eval_detect(const std::string& corpus_dir, const std::string& split, const std::string& model_path,
                    const std::string& calib_path, bool as_json, std::ostream& out) {
  const CorpusSplits s = load_splits(corpus_dir);
  const AnnotatedCorpus& c = pick_split(s, split);
  const Model model = load_model(model_path);
  const Calibration calib = load_calibration(calib_path);
  const ScoredLabels d = detection_data(corpus_predictions(model, c), c);
  const PrecisionRecall pr = precision_recall_at(d, calib.tau_unrecognizable);
  const double roc = auc_roc(d), ap = auc_pr(d);
  json report{{"command", "eval-detect"}, {"split", split},          {"size", d.size()},
              {"positives", d.positives()}, {"tau", calib.tau_unrecognizable},
              {"precision", pr.precision},  {"recall", pr.recall},   {"auc_roc", roc},
              {"auc_pr", ap}};
  std::string text = "split " + split + " (" + std::to_string(d.size()) + " images, " +
                     std::to_string(d.positives()) + " poor), tau " + fixed(calib.tau_unrecognizable) + "\n";
  text += "precision  " + fixed(pr.precision) + "\n";
  text += "recall     " + fixed(pr.recall) + "\n";
  text += "auc_roc    " + fixed(roc) + "\n";
  text += "auc_pr     " + fixed(ap) + "\n";
  emit(out, as_json, report, text);
  return 0;
}

int cmd_eval_flaws(const std::string& corpus_dir, const std::string& split, const std::string& model_path,
                   bool as_json, std::ostream& out) {
  const CorpusSplits s = load_splits(corpus_dir);
  const AnnotatedCorpus& c = pick_split(s, split);
  const Model model = load_model(model_path);
  const auto preds = corpus_predictions(model, c);

  json rows = json::array();
  std::string text = "flaw       gt mean+-sd    pred mean+-sd  mse     corr\n";
  double corr_sum = 0.0;
  std::size_t corr_count = 0;
  for (FlawKind k : kAllFlaws) {
    std::vector<double> gt, pr;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      gt.push_back(c.entries[i].annotation.flaws[k].value());
      pr.push_back(preds[i].flaws_hat[k]);
    }
    const double err = mse(pr, gt);
    std::optional<double> corr;
    try {
      corr = pearson_corr(pr, gt);
      corr_sum += *corr;
      ++corr_count;
    } catch (const DegenerateInputError&) {
    }
    const double var = sd_of(gt) * sd_of(gt);
    rows.push_back({{"flaw", std::string(flaw_name(k))},
                    {"gt_mean", mean_of(gt)},
                    {"gt_sd", sd_of(gt)},
                    {"gt_variance", var},
                    {"pred_mean", mean_of(pr)},
                    {"pred_sd", sd_of(pr)},
                    {"mse", err},
                    {"corr", corr ? json(*corr) : json(nullptr)}});
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %.2f+-%.2f      %.2f+-%.2f      %.3f   %s\n",
                  std::string(flaw_name(k)).c_str(), mean_of(gt), sd_of(gt), mean_of(pr), sd_of(pr), err,
                  corr ? fixed(*corr, 3).c_str() : "n/a");
    text += line;
  }
  const double mean_corr = corr_count ? corr_sum / static_cast<double>(corr_count) : 0.0;
  text += "mean corr  " + fixed(mean_corr, 3) + "\n";
  json report{{"command", "eval-flaws"}, {"split", split}, {"size", preds.size()}, {"flaws", rows},
              {"mean_corr", mean_corr}};
  emit(out, as_json, report, text);
  return 0;
}

int cmd_filter(const std::string& corpus_dir, const std::string& split, const std::string& model_path,
               const std::string& calib_path, const std::string& out_dir, bool as_json, std::ostream& out) {
  const CorpusSplits s = load_splits(corpus_dir);
  const AnnotatedCorpus& c = pick_split(s, split);
  const Model model = load_model(model_path);
  const Calibration calib = load_calibration(calib_path);
  const FilterResult r = filter_dataset(c, model, calib.tau_unrecognizable);

  StubCaptioner captioner = StubCaptioner::from_corpus(
      load_catalog((fs::path(corpus_dir) / "catalog.json").string()), {&s.train, &s.val_pool});
  auto dump_pairs = [&](const std::vector<CorpusEntry>& entries, const std::string& suffix) {
    std::vector<json> cands, refs;
    for (const CorpusEntry& e : entries) {
      const std::string& id = e.annotation.image_id;
      cands.push_back({{"image_id", id}, {"caption", captioner.caption({id, {}, ""})}});
      refs.push_back({{"image_id", id}, {"captions", e.annotation.captions}});
    }
    write_jsonl((fs::path(out_dir) / ("candidates_" + suffix + ".jsonl")).string(), cands);
    write_jsonl((fs::path(out_dir) / ("references_" + suffix + ".jsonl")).string(), refs);
  };
  fs::create_directories(out_dir);
  dump_pairs(c.entries, "all");
  dump_pairs(r.qualified, "qualified");
  AnnotatedCorpus kept{c.root, r.qualified, c.split, c.seed};
  save_annotations(kept, (fs::path(out_dir) / "qualified.json").string());

  json report{{"command", "filter"}, {"split", split},        {"total", c.entries.size()},
              {"kept", r.qualified.size()}, {"excluded", r.excluded}, {"tau", calib.tau_unrecognizable}};
  emit(out, as_json, report,
       "kept " + std::to_string(r.qualified.size()) + " of " + std::to_string(c.entries.size()) + ", excluded " +
           std::to_string(r.excluded) + " (tau " + fixed(calib.tau_unrecognizable) + ")\n");
  return 0;
}

int cmd_eval_captions(const std::string& candidates, const std::string& references, std::size_t excluded,
                      bool as_json, std::ostream& out) {
  const auto pairs = captions::load_eval_pairs(candidates, references);
  const captions::CaptionEvalReport r = captions::evaluate_corpus(pairs, excluded);
  std::string text = "pairs " + std::to_string(r.corpus_size) + ", excluded " + std::to_string(r.excluded) + "\n";
  text += "BLEU-4       " + fixed(r.bleu4) + "\n";
  text += "METEOR-lite  " + fixed(r.meteor_lite) + "\n";
  text += "ROUGE-L      " + fixed(r.rouge_l) + "\n";
  text += "CIDEr        " + fixed(r.cider) + "\n";
  if (as_json) {
    out << captions::report_to_json(r) << "\n";
  } else {
    out << text;
  }
  return 0;
}

int cmd_predict(const std::string& image_path, const std::string& model_path, const std::string& calib_path,
                bool as_json, std::ostream& out) {
  const Model model = load_model(model_path);
  GateConfig cfg;
  if (!calib_path.empty()) {
    const Calibration c = load_calibration(calib_path);
    cfg.tau_unrecognizable = c.tau_unrecognizable;
    cfg.flaw_feedback_threshold = c.flaw_feedback_threshold;
  }
  const auto bytes = read_file_bytes(image_path);
  const RasterImage img = upscale_to_feature_minimum(decode_image(bytes));
  const QualityPrediction p = predict(model, img);
  const GateDecision d = gate(p, cfg);
  json report = decision_json(d);
  report["prediction"] = prediction_json(p);
  report["tau"] = cfg.tau_unrecognizable;
  std::string text = "unrecognizable " + fixed(display_severity(p.unrecognizable_hat), 2) + " (tau " +
                     fixed(cfg.tau_unrecognizable, 2) + ") -> " + std::string(verdict_name(d.verdict)) + "\n";
  for (FlawKind k : kAllFlaws) {
    char line[64];
    std::snprintf(line, sizeof line, "  %-10s %.2f\n", std::string(flaw_name(k)).c_str(),
                  display_severity(p.flaws_hat[k]));
    text += line;
  }
  for (const auto& f : d.feedback) text += f.message + "\n";
  emit(out, as_json, report, text);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"pinf: image quality gate for captioning"};
  app.require_subcommand(1);
  app.fallthrough();
  bool as_json = false;
  app.add_flag("--json", as_json, "Print the report as JSON");

  std::string corpus, model, calib, out_path, split = "test", image, config, candidates, references;
  std::size_t count = 0, excluded = 0;
  std::uint64_t seed = 1;
  double feedback_threshold = 2.0;
  int port = -1;
  TrainConfig tc;

  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic degraded corpus");
  gen->add_option("--out", out_path, "Output directory")->required();
  gen->add_option("--count", count, "Number of images")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "Generator seed")->required();

  auto* tr = app.add_subcommand("train", "Train the quality regressor");
  tr->add_option("--corpus", corpus, "Corpus directory")->required();
  tr->add_option("--out", out_path, "Model output path")->required();
  tr->add_option("--lr", tc.learning_rate, "Adam learning rate");
  tr->add_option("--batch", tc.batch_size, "Mini-batch size");
  tr->add_option("--epochs", tc.max_epochs, "Maximum epochs");
  tr->add_option("--patience", tc.patience, "Early-stopping patience");
  tr->add_option("--hidden", tc.hidden, "Hidden units");
  tr->add_option("--seed", tc.seed, "Training seed");
  tr->add_flag("--single-task", tc.single_task, "Train on the unrecognizable output only");

  auto* cal = app.add_subcommand("calibrate", "Select the unrecognizable threshold on validation data");
  cal->add_option("--corpus", corpus, "Corpus directory")->required();
  cal->add_option("--model", model, "Model path")->required();
  cal->add_option("--out", out_path, "Calibration output path")->required();
  cal->add_option("--feedback-threshold", feedback_threshold, "Minimum flaw severity named in feedback");

  auto* det = app.add_subcommand("eval-detect", "Poor-image detection statistics");
  det->add_option("--corpus", corpus, "Corpus directory")->required();
  det->add_option("--split", split, "train, val or test");
  det->add_option("--model", model, "Model path")->required();
  det->add_option("--calib", calib, "Calibration path")->required();

  auto* fl = app.add_subcommand("eval-flaws", "Per-flaw regression statistics");
  fl->add_option("--corpus", corpus, "Corpus directory")->required();
  fl->add_option("--split", split, "train, val or test");
  fl->add_option("--model", model, "Model path")->required();

  auto* flt = app.add_subcommand("filter", "Drop predicted-poor images and caption the rest");
  flt->add_option("--corpus", corpus, "Corpus directory")->required();
  flt->add_option("--split", split, "train, val or test");
  flt->add_option("--model", model, "Model path")->required();
  flt->add_option("--calib", calib, "Calibration path")->required();
  flt->add_option("--out", out_path, "Output directory")->required();

  auto* cap = app.add_subcommand("eval-captions", "Caption metrics for candidate/reference files");
  cap->add_option("--candidates", candidates, "Candidate JSON-lines file")->required();
  cap->add_option("--references", references, "Reference JSON-lines file")->required();
  cap->add_option("--excluded", excluded, "Excluded-image count to record in the report");

  auto* pred = app.add_subcommand("predict", "Predict quality for one image");
  pred->add_option("--image", image, "PPM or PNG file")->required();
  pred->add_option("--model", model, "Model path")->required();
  pred->add_option("--calib", calib, "Calibration path");

  auto* srv = app.add_subcommand("serve", "Run the HTTP service");
  srv->add_option("--config", config, "Service config JSON");
  srv->add_option("--port", port, "Listen port (overrides config and environment)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen_corpus(out_path, count, seed, as_json, out);
    if (*tr) return cmd_train(corpus, out_path, tc, as_json, out);
    if (*cal) return cmd_calibrate(corpus, model, out_path, feedback_threshold, as_json, out);
    if (*det) return cmd_eval_detect(corpus, split, model, calib, as_json, out);
    if (*fl) return cmd_eval_flaws(corpus, split, model, as_json, out);
    if (*flt) return cmd_filter(corpus, split, model, calib, out_path, as_json, out);
    if (*cap) return cmd_eval_captions(candidates, references, excluded, as_json, out);
    if (*pred) return cmd_predict(image, model, calib, as_json, out);
    if (*srv) {
      ServiceConfig cfg = load_service_config(config);
      if (port >= 0) cfg.port = port;
      cfg.validate();
      return serve(cfg, err);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace pinf
