#include "dmpad/cli/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "dmpad/attention/gradcam.hpp"
#include "dmpad/core/error.hpp"
#include "dmpad/data/manifest.hpp"
#include "dmpad/data/split.hpp"
#include "dmpad/data/synth.hpp"
#include "dmpad/geometry/regions.hpp"
#include "dmpad/metrics/metrics.hpp"
#include "dmpad/netcore/checkpoint.hpp"
#include "dmpad/pipeline/config.hpp"
#include "dmpad/pipeline/train.hpp"

namespace dmpad::cli {

namespace fs = std::filesystem;
using pipeline::TrainConfig;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<double> k_percent;
  std::optional<std::string> fusion_mode;
};

void add_config_flags(CLI::App* app, Common& c, bool with_k = false, bool with_mode = false) {
  app->add_option("--config", c.config, "config file ([section] / key = value)");
  app->add_option("--set", c.overrides, "override one config key: section.key=value (repeatable)");
  app->add_option("--seed", c.seed, "master seed (same as --set general.seed=...)");
  if (with_k) app->add_option("--k-percent", c.k_percent, "top-k% pooling for attention scores");
  if (with_mode) app->add_option("--fusion-mode", c.fusion_mode, "weighted_mlp | unweighted_mlp | majority_vote");
  app->footer(pipeline::config_help());
}

TrainConfig resolve_config(const Common& c) {
  TrainConfig cfg = c.config.empty() ? TrainConfig{} : pipeline::load_config(c.config);
  for (const auto& o : c.overrides) pipeline::apply_override(cfg, o);
  if (c.seed) cfg.seed = *c.seed;
  if (c.k_percent) cfg.attention.k_percent = *c.k_percent;
  if (c.fusion_mode) cfg.fusion.mode = pipeline::parse_fusion_mode(*c.fusion_mode);
  cfg.validate();
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw RuntimeError("cannot create directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << text;
}

void require_file(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) throw RuntimeError("missing " + path.string() + " (" + hint + ")");
}

std::vector<pipeline::LoadedSample> load(const std::string& manifest) {
  return pipeline::load_samples(data::load_manifest(manifest));
}

void progress(const std::string& msg) { std::cerr << msg << '\n'; }

std::string format_report(const metrics::MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << "ACER " << r.acer << "%  APCER " << r.apcer << "%  BPCER " << r.bpcer
     << "%  EER " << r.eer << "%  accuracy " << r.accuracy << "%  TDR@FDR=" << r.fdr_percent << "% " << r.tdr_at_fdr
     << "%";
  return os.str();
}

}  // namespace

int run(const std::vector<std::string>& args_in) {
  CLI::App app{"Two-phase disguise-makeup presentation attack detection"};
  app.name(args_in.empty() ? "dmpad" : fs::path(args_in[0]).filename().string());
  app.require_subcommand(1);

  // synth
  data::SynthConfig synth;
  std::string synth_out;
  auto* c_synth = app.add_subcommand("synth", "generate the synthetic dataset");
  c_synth->add_option("--out", synth_out, "output directory")->required();
  c_synth->add_option("--seed", synth.seed, "generator seed")->capture_default_str();
  c_synth->add_option("--live", synth.n_subjects_live, "bona fide subjects")->capture_default_str();
  c_synth->add_option("--attack", synth.n_subjects_attack, "attack subjects")->capture_default_str();
  c_synth->add_option("--size", synth.image_size, "image size in pixels")->capture_default_str();
  c_synth->add_option("--regions", synth.artifact_region_count, "planted regions per attack")->capture_default_str();
  c_synth->add_option("--jitter", synth.style_jitter, "global style jitter in [0, 1]")->capture_default_str();
  c_synth->add_option("--images-per-subject", synth.images_per_subject, "images per subject")->capture_default_str();

  // split
  std::string split_manifest, split_out;
  int folds = 0;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 7;
  auto* c_split = app.add_subcommand("split", "subject-disjoint holdout or k-fold split");
  c_split->add_option("--manifest", split_manifest, "input manifest")->required();
  c_split->add_option("--out", split_out, "output directory")->required();
  c_split->add_option("--folds", folds, "k for k-fold (omit for a single holdout split)");
  c_split->add_option("--test-fraction", test_fraction, "holdout test fraction")->capture_default_str();
  c_split->add_option("--seed", split_seed, "shuffle seed")->capture_default_str();

  // train-phase1
  Common p1;
  std::string p1_train, p1_out;
  auto* c_p1 = app.add_subcommand("train-phase1", "train the full-face network");
  c_p1->add_option("--train", p1_train, "training manifest")->required();
  c_p1->add_option("--out", p1_out, "checkpoint directory")->required();
  add_config_flags(c_p1, p1);

  // extract-attention
  Common ea;
  std::string ea_ckpt, ea_manifest, ea_out;
  auto* c_ea = app.add_subcommand("extract-attention", "Grad-CAM region attention table");
  c_ea->add_option("--ckpt", ea_ckpt, "checkpoint directory (phase1.ckpt)")->required();
  c_ea->add_option("--manifest", ea_manifest, "samples to score")->required();
  c_ea->add_option("--out", ea_out, "attention CSV (default <ckpt>/attention.csv)");
  add_config_flags(c_ea, ea, true);

  // train-phase2
  Common p2;
  std::string p2_train, p2_ckpt;
  auto* c_p2 = app.add_subcommand("train-phase2", "train the seven patch networks");
  c_p2->add_option("--train", p2_train, "training manifest")->required();
  c_p2->add_option("--out", p2_ckpt, "checkpoint directory")->required();
  add_config_flags(c_p2, p2);

  // train-fusion
  Common tf;
  std::string tf_train, tf_ckpt, tf_att;
  auto* c_tf = app.add_subcommand("train-fusion", "train the attention-weighted fusion MLP");
  c_tf->add_option("--train", tf_train, "training manifest")->required();
  c_tf->add_option("--out", tf_ckpt, "checkpoint directory")->required();
  c_tf->add_option("--attention", tf_att, "attention CSV (default <ckpt>/attention.csv)");
  add_config_flags(c_tf, tf, false, true);

  // evaluate
  Common ev;
  std::vector<std::string> ev_scores;
  std::string ev_ckpt, ev_manifest, ev_out, ev_scores_out;
  auto* c_ev = app.add_subcommand("evaluate", "PAD metrics report (JSON)");
  c_ev->add_option("--scores", ev_scores, "score CSV; repeat once per fold to aggregate");
  c_ev->add_option("--ckpt", ev_ckpt, "checkpoint directory (scores the manifest first)");
  c_ev->add_option("--manifest", ev_manifest, "test manifest (with --ckpt)");
  c_ev->add_option("--out", ev_out, "report path (default metrics.json next to the scores)");
  c_ev->add_option("--scores-out", ev_scores_out, "where to write scores when using --ckpt");
  add_config_flags(c_ev, ev, true, true);

  // predict
  Common pr;
  std::string pr_ckpt, pr_manifest, pr_sample, pr_out;
  auto* c_pr = app.add_subcommand("predict", "attack score and label per sample");
  c_pr->add_option("--ckpt", pr_ckpt, "checkpoint directory")->required();
  c_pr->add_option("--manifest", pr_manifest, "samples")->required();
  c_pr->add_option("--sample", pr_sample, "only this sample id");
  c_pr->add_option("--out", pr_out, "score CSV (default: stdout)");
  add_config_flags(c_pr, pr, true, true);

  // visualize
  Common vz;
  std::string vz_ckpt, vz_manifest, vz_out;
  int vz_limit = 8;
  auto* c_vz = app.add_subcommand("visualize", "heatmap overlays and patch-box images");
  c_vz->add_option("--ckpt", vz_ckpt, "checkpoint directory (phase1.ckpt)")->required();
  c_vz->add_option("--manifest", vz_manifest, "samples")->required();
  c_vz->add_option("--out", vz_out, "output directory")->required();
  c_vz->add_option("--limit", vz_limit, "number of samples")->capture_default_str();
  add_config_flags(c_vz, vz, true);

  std::vector<std::string> rev(args_in.rbegin(), args_in.rend() - (args_in.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << " (see --help)\n";
    return 1;
  }

  try {
    if (*c_synth) {
      const auto m = data::generate_synthetic(synth, synth_out);
      std::cout << "wrote " << m.samples.size() << " samples to " << (fs::path(synth_out) / "manifest.csv").string()
                << '\n';
    } else if (*c_split) {
      const auto m = data::load_manifest(split_manifest, {.decode_images = false});
      ensure_dir(split_out);
      if (folds > 0) {
        const auto parts = data::kfold_subject_split(m, folds, split_seed);
        for (std::size_t i = 0; i < parts.size(); ++i) {
          data::write_manifest(fs::path(split_out) / ("fold" + std::to_string(i) + "_train.csv"), parts[i].train);
          data::write_manifest(fs::path(split_out) / ("fold" + std::to_string(i) + "_test.csv"), parts[i].test);
        }
        std::cout << "wrote " << parts.size() << " folds to " << split_out << '\n';
      } else {
        const auto p = data::holdout_subject_split(m, test_fraction, split_seed);
        data::write_manifest(fs::path(split_out) / "train.csv", p.train);
        data::write_manifest(fs::path(split_out) / "test.csv", p.test);
        std::cout << "train " << p.train.samples.size() << " / test " << p.test.samples.size() << " samples\n";
      }
    } else if (*c_p1) {
      const auto cfg = resolve_config(p1);
      const auto train = load(p1_train);
      ensure_dir(p1_out);
      auto res = pipeline::train_phase1(cfg, train, progress);
      nn::save_checkpoint(fs::path(p1_out) / "phase1.ckpt", res.model.to_checkpoint());
      pipeline::write_phase1_log(fs::path(p1_out) / "phase1_log.csv", res.log);
      write_text(fs::path(p1_out) / "config_snapshot", pipeline::config_snapshot(cfg));
    } else if (*c_ea) {
      const auto cfg = resolve_config(ea);
      require_file(fs::path(ea_ckpt) / "phase1.ckpt", "run train-phase1 first");
      auto model = nn::FullFaceModel::from_checkpoint(nn::load_checkpoint(fs::path(ea_ckpt) / "phase1.ckpt"));
      const auto rows = pipeline::extract_attention(model, load(ea_manifest), cfg.attention.k_percent);
      const fs::path out = ea_out.empty() ? fs::path(ea_ckpt) / "attention.csv" : fs::path(ea_out);
      attention::write_attention_csv(out, rows);
      std::cout << "wrote " << rows.size() << " attention rows to " << out.string() << '\n';
    } else if (*c_p2) {
      const auto cfg = resolve_config(p2);
      const auto train = load(p2_train);
      ensure_dir(p2_ckpt);
      auto results = pipeline::train_phase2(cfg, train, progress);
      std::vector<pipeline::PatchEpochLog> log;
      for (auto& r : results) {
        nn::save_checkpoint(fs::path(p2_ckpt) / ("patch_" + r.model.region() + ".ckpt"), r.model.to_checkpoint());
        log.insert(log.end(), r.log.begin(), r.log.end());
      }
      pipeline::write_patch_log(fs::path(p2_ckpt) / "phase2_log.csv", log);
      std::ofstream norm(fs::path(p2_ckpt) / "norm_stats.txt");
      norm << std::setprecision(9);
      if (fs::exists(fs::path(p2_ckpt) / "phase1.ckpt")) {
        const auto ff = nn::FullFaceModel::from_checkpoint(nn::load_checkpoint(fs::path(p2_ckpt) / "phase1.ckpt"));
        const auto& s = ff.standardizer();
        norm << "fullface mean " << s.mean[0] << ' ' << s.mean[1] << ' ' << s.mean[2] << " std " << s.std[0] << ' '
             << s.std[1] << ' ' << s.std[2] << '\n';
      }
      for (const auto& r : results) {
        const auto& s = r.model.standardizer();
        norm << "patch_" << r.model.region() << " mean " << s.mean[0] << ' ' << s.mean[1] << ' ' << s.mean[2]
             << " std " << s.std[0] << ' ' << s.std[1] << ' ' << s.std[2] << '\n';
      }
      write_text(fs::path(p2_ckpt) / "config_snapshot", pipeline::config_snapshot(cfg));
    } else if (*c_tf) {
      const auto cfg = resolve_config(tf);
      std::vector<nn::PatchModel> patches;
      for (auto r : geometry::kAllRegions) {
        const auto path = fs::path(tf_ckpt) / ("patch_" + std::string(geometry::region_name(r)) + ".ckpt");
        require_file(path, "run train-phase2 first");
        patches.push_back(nn::PatchModel::from_checkpoint(nn::load_checkpoint(path)));
      }
      std::map<std::string, attention::AttentionScores> table;
      if (cfg.fusion.mode == pipeline::FusionMode::weighted_mlp) {
        const fs::path att = tf_att.empty() ? fs::path(tf_ckpt) / "attention.csv" : fs::path(tf_att);
        require_file(att, "run extract-attention on the training manifest first");
        table = pipeline::attention_map(attention::read_attention_csv(att));
      } else {
        for (const auto& s : data::load_manifest(tf_train, {.decode_images = false}).samples) table[s.sample_id] = {};
      }
      const auto res = pipeline::train_fusion(cfg, patches, table, load(tf_train), progress);
      pipeline::save_fusion(tf_ckpt, res, cfg.fusion.mode);
      pipeline::write_fusion_log(fs::path(tf_ckpt) / "fusion_log.csv", res.log);
      write_text(fs::path(tf_ckpt) / "config_snapshot", pipeline::config_snapshot(cfg));
    } else if (*c_ev) {
      const auto cfg = resolve_config(ev);
      std::vector<std::vector<metrics::ScoredSample>> sets;
      fs::path default_dir = ".";
      if (!ev_ckpt.empty()) {
        if (ev_manifest.empty()) throw ValidationError("evaluate --ckpt also needs --manifest");
        auto sys = pipeline::load_system(ev_ckpt);
        sys.k_percent = cfg.attention.k_percent;
        if (ev.fusion_mode && pipeline::parse_fusion_mode(*ev.fusion_mode) != sys.mode) {
          throw ValidationError("--fusion-mode differs from the trained fusion.ckpt; re-run train-fusion");
        }
        sets.push_back(pipeline::score_samples(sys, load(ev_manifest), cfg.eval.threshold));
        const fs::path sp = ev_scores_out.empty() ? fs::path(ev_ckpt) / "scores.csv" : fs::path(ev_scores_out);
        metrics::write_scores_csv(sp, sets.back());
        default_dir = ev_ckpt;
      } else {
        if (ev_scores.empty()) throw ValidationError("evaluate needs --scores or --ckpt with --manifest");
        for (const auto& s : ev_scores) sets.push_back(metrics::read_scores_csv(s));
        default_dir = fs::path(ev_scores[0]).parent_path();
        if (default_dir.empty()) default_dir = ".";
      }
      std::vector<metrics::MetricsReport> reports;
      for (const auto& s : sets) reports.push_back(metrics::full_report(s, cfg.eval.threshold, cfg.eval.fdr_percent));
      const auto j = reports.size() == 1 ? metrics::report_json(reports[0]) : metrics::folds_json(reports);
      const fs::path out = ev_out.empty() ? default_dir / "metrics.json" : fs::path(ev_out);
      metrics::write_json(out, j);
      for (std::size_t i = 0; i < reports.size(); ++i)
        std::cout << (reports.size() > 1 ? "fold " + std::to_string(i) + ": " : "") << format_report(reports[i])
                  << '\n';
      std::cout << "report: " << out.string() << '\n';
    } else if (*c_pr) {
      const auto cfg = resolve_config(pr);
      auto sys = pipeline::load_system(pr_ckpt);
      sys.k_percent = cfg.attention.k_percent;
      auto samples = load(pr_manifest);
      if (!pr_sample.empty()) {
        std::erase_if(samples, [&](const pipeline::LoadedSample& s) { return s.meta.sample_id != pr_sample; });
        if (samples.empty()) throw ValidationError("sample '" + pr_sample + "' not in " + pr_manifest);
      }
      const auto preds = pipeline::predict(sys, samples, cfg.eval.threshold);
      std::ofstream file;
      if (!pr_out.empty()) {
        file.open(pr_out);
        if (!file) throw RuntimeError("cannot write " + pr_out);
      }
      std::ostream& out = pr_out.empty() ? std::cout : file;
      out << "sample_id,score,label\n" << std::setprecision(9);
      for (std::size_t i = 0; i < preds.size(); ++i)
        out << samples[i].meta.sample_id << ',' << preds[i].score << ','
            << data::label_token(preds[i].label ? data::Label::attack : data::Label::bona_fide) << '\n';
    } else if (*c_vz) {
      resolve_config(vz);  // validates --config / --set
      require_file(fs::path(vz_ckpt) / "phase1.ckpt", "run train-phase1 first");
      auto model = nn::FullFaceModel::from_checkpoint(nn::load_checkpoint(fs::path(vz_ckpt) / "phase1.ckpt"));
      auto samples = load(vz_manifest);
      if (vz_limit >= 0 && static_cast<std::size_t>(vz_limit) < samples.size()) samples.resize(vz_limit);
      ensure_dir(vz_out);
      const int size = model.config().input_size;
      for (const auto& s : samples) {
        const auto input = pipeline::fullface_inputs({s}, size).front();
        const auto hm = attention::gradcam_heatmap(model, input);
        write_png(fs::path(vz_out) / (s.meta.sample_id + "_heatmap.png"), attention::overlay_heatmap(s.image, hm));
        write_png(fs::path(vz_out) / (s.meta.sample_id + "_patches.png"),
                  geometry::draw_patch_boxes(s.image, geometry::derive_patch_regions(s.landmarks)));
      }
      std::cout << "wrote " << 2 * samples.size() << " images to " << vz_out << '\n';
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace dmpad::cli
