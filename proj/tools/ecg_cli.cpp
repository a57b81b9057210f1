// Command-line front end: file-based subcommands over the digitization,
// classification, and spectral-analysis pipeline.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ecgkit/bayes.hpp"
#include "ecgkit/imgproc.hpp"
#include "ecgkit/io.hpp"
#include "ecgkit/model.hpp"
#include "ecgkit/model_io.hpp"
#include "ecgkit/preproc.hpp"
#include "ecgkit/spectral.hpp"
#include "ecgkit/stats.hpp"
#include "ecgkit/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ecgkit;

namespace {

// Exit codes: 1 usage, 2 digitization/synthesis, 3 segmentation,
// 4 spectral/statistics, 5 model and training I/O.
enum ExitCode {
  kExitUsage = 1,
  kExitDigitize = 2,
  kExitSegment = 3,
  kExitSpectral = 4,
  kExitModel = 5,
};

struct RunConfig {
  CalibrationSpec calibration;
  DespeckleFilter despeckle;
  double percentile = 0.95;
  DetrendConfig detrend;
  SmoothConfig smooth;
  bool smooth_enabled = false;
  double window_ms = 700.0;
  TrainConfig train;
  std::size_t repeats = 1;
  DiagnosticProfile profile;
  double alpha = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    calibration.validate();
    despeckle.validate();
    if (!(percentile > 0.0 && percentile < 1.0))
      throw InvalidConfigError("percentile must lie in (0,1)");
    detrend.validate();
    smooth.validate();
    if (!(window_ms > 0.0)) throw InvalidConfigError("window must be positive");
    train.validate();
    profile.validate();
    if (!(alpha > 0.0 && alpha < 1.0))
      throw InvalidConfigError("alpha must lie in (0,1)");
    if (repeats < 1) throw InvalidConfigError("repeats must be >= 1");
  }
};

RunConfig load_config(const std::string& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw InvalidConfigError("cannot read config " + path);
  json doc;
  in >> doc;
  if (doc.contains("calibration")) {
    const auto& c = doc["calibration"];
    cfg.calibration.dpi = c.value("dpi", cfg.calibration.dpi);
    cfg.calibration.paper_speed_mm_s = c.value("paper_speed_mm_s", cfg.calibration.paper_speed_mm_s);
    cfg.calibration.gain_mm_mv = c.value("gain_mm_mv", cfg.calibration.gain_mm_mv);
  }
  if (doc.contains("despeckle")) {
    cfg.despeckle.k = doc["despeckle"].value("k", cfg.despeckle.k);
    cfg.despeckle.c = doc["despeckle"].value("c", cfg.despeckle.c);
  }
  cfg.percentile = doc.value("percentile", cfg.percentile);
  if (doc.contains("detrend")) cfg.detrend.order = doc["detrend"].value("order", cfg.detrend.order);
  if (doc.contains("smooth")) {
    cfg.smooth_enabled = doc["smooth"].value("enabled", cfg.smooth_enabled);
    cfg.smooth.window = doc["smooth"].value("window", cfg.smooth.window);
    cfg.smooth.degree = doc["smooth"].value("degree", cfg.smooth.degree);
  }
  if (doc.contains("segment")) cfg.window_ms = doc["segment"].value("window_ms", cfg.window_ms);
  if (doc.contains("train")) {
    const auto& t = doc["train"];
    cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.split_ratio = t.value("split_ratio", cfg.train.split_ratio);
    cfg.repeats = t.value("repeats", cfg.repeats);
  }
  if (doc.contains("profile")) {
    const auto& p = doc["profile"];
    cfg.profile.sensitivity = p.value("sensitivity", cfg.profile.sensitivity);
    cfg.profile.specificity = p.value("specificity", cfg.profile.specificity);
    cfg.profile.prior = p.value("prior", cfg.profile.prior);
  }
  cfg.alpha = doc.value("alpha", cfg.alpha);
  cfg.seed = doc.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

int fail(ExitCode code, const std::string& message) {
  std::cerr << "error: " << message << "\n";
  return code;
}

// ---------------------------------------------------------------------------

int run_digitize(const RunConfig& cfg, const std::string& image_path,
                 const std::string& out_csv, const std::string& report_path,
                 std::optional<int> baseline_row) {
  try {
    const GrayImage img = io::read_png_gray(image_path, cfg.calibration.dpi);
    DigitizeReport report;
    const Signal sig = digitize(img, cfg.calibration, cfg.despeckle, cfg.percentile,
                                &report, baseline_row);
    io::write_signal_csv(sig, out_csv);
    if (!report_path.empty()) {
      json doc{{"threshold", report.threshold},
               {"flipped_pixels", report.flipped_pixels},
               {"absent_columns", report.absent_columns},
               {"baseline_row", report.baseline_row}};
      std::ofstream out(report_path);
      out << doc.dump(2) << '\n';
    }
    return 0;
  } catch (const Error& e) {
    return fail(kExitDigitize, e.what());
  }
}

int run_segment(const RunConfig& cfg, const std::string& csv_path,
                const std::string& out_dir, const std::string& lead, int label,
                const std::vector<std::size_t>& exclude) {
  try {
    const Signal raw = io::read_signal_csv(csv_path);
    Signal sig = detrend_median(raw, cfg.detrend);
    if (cfg.smooth_enabled) sig = savgol_smooth(sig, cfg.smooth);
    const auto peaks = detect_r_peaks(sig);
    const auto beats = segment_beats(sig, peaks, cfg.window_ms);

    fs::create_directories(out_dir);
    const std::string source_id = stem_of(csv_path);
    std::ofstream manifest(fs::path(out_dir) / "manifest.jsonl");

    std::size_t written = 0;
    for (std::size_t b = 0; b < beats.size(); ++b) {
      if (std::find(exclude.begin(), exclude.end(), b) != exclude.end()) continue;
      char name[32];
      std::snprintf(name, sizeof(name), "beat_%03zu", b);
      const std::string beat_csv = (fs::path(out_dir) / (std::string(name) + ".csv")).string();
      const std::string beat_png = (fs::path(out_dir) / (std::string(name) + ".png")).string();
      io::write_signal_csv(beats[b].samples, beat_csv);
      io::write_beat_image_png(render_beat_image(beats[b]), beat_png);

      json sidecar{{"lead", lead},
                   {"label", label},
                   {"r_index", beats[b].r_index},
                   {"source_id", source_id}};
      std::ofstream side(fs::path(out_dir) / (std::string(name) + ".json"));
      side << sidecar.dump(2) << '\n';

      json line{{"source_id", source_id},      {"patient_id", source_id},
                {"label", label},               {"lead", lead},
                {"r_index", beats[b].r_index},  {"beat_csv_path", beat_csv},
                {"beat_png_path", beat_png}};
      manifest << line.dump() << '\n';
      ++written;
    }
    if (written == 0) {
      std::cerr << "error: no beats found\n";
      return kExitSegment;
    }
    return 0;
  } catch (const Error& e) {
    return fail(kExitSegment, e.what());
  }
}

Dataset load_manifest_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot read manifest " + manifest_path);
  Dataset data;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json doc = json::parse(line);
    LabeledBeat beat;
    beat.label = doc.value("label", -1);
    beat.patient_id = doc.value("patient_id", std::string{});
    beat.image = io::read_beat_image_png(doc.at("beat_png_path").get<std::string>());
    data.push_back(std::move(beat));
  }
  return data;
}

json metric_summary(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  json out{{"mean", mean}};
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    const double half = 1.96 * sd / std::sqrt(n);
    out["ci95_low"] = mean - half;
    out["ci95_high"] = mean + half;
    out["sd"] = sd;
  }
  return out;
}

int run_train(const RunConfig& cfg, const std::string& manifest_path,
              const std::string& out_dir, std::size_t aug_normal,
              std::size_t aug_abnormal) {
  try {
    Dataset data = load_manifest_dataset(manifest_path);
    fs::create_directories(out_dir);

    std::vector<double> accs, senss, specs;
    std::optional<TrainResult> last;
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
      TrainConfig tc = cfg.train;
      tc.seed = cfg.seed + r;

      auto factory = [&](std::uint64_t s) { return standard_model(s); };
      // Train-side augmentation happens after the split; passing the
      // augmentation through the patient id would leak, so variants keep
      // their patient's id and only the training subset grows.
      TrainResult res = [&] {
        if (aug_normal == 0 && aug_abnormal == 0) return train(data, tc, factory);
        Dataset expanded = data;
        for (const auto& beat : data) {
          const std::size_t n = beat.label == 1 ? aug_abnormal : aug_normal;
          if (n == 0) continue;
          const auto variants = augment(beat.image, tc.seed ^ expanded.size(), n);
          for (const auto& v : variants)
            expanded.push_back({v, beat.label, beat.patient_id});
        }
        return train(expanded, tc, factory);
      }();

      accs.push_back(res.test_metrics.accuracy);
      if (res.test_metrics.sensitivity) senss.push_back(*res.test_metrics.sensitivity);
      if (res.test_metrics.specificity) specs.push_back(*res.test_metrics.specificity);
      last = std::move(res);
    }

    io::save_model(last->model, (fs::path(out_dir) / "model.json").string());
    io::write_curves_csv(last->curves, (fs::path(out_dir) / "curves.csv").string());

    json metrics{{"repeats", cfg.repeats},
                 {"accuracy", metric_summary(accs)},
                 {"counts",
                  {{"tp", last->test_metrics.tp},
                   {"tn", last->test_metrics.tn},
                   {"fp", last->test_metrics.fp},
                   {"fn", last->test_metrics.fn}}}};
    if (!senss.empty()) metrics["sensitivity"] = metric_summary(senss);
    if (!specs.empty()) metrics["specificity"] = metric_summary(specs);
    std::ofstream mout(fs::path(out_dir) / "metrics.json");
    mout << metrics.dump(2) << '\n';
    return 0;
  } catch (const Error& e) {
    return fail(kExitModel, e.what());
  }
}

int run_classify(const std::string& model_path, const std::string& manifest_path,
                 const std::string& out_csv) {
  try {
    Model model = io::load_model(model_path);

    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot read manifest " + manifest_path);
    std::ofstream out(out_csv);
    if (!out) throw IoError("cannot write " + out_csv);
    out << "beat,probability,label\n";

    std::string line;
    std::vector<std::string> paths;
    Batch batch;
    auto flush = [&]() {
      if (batch.empty()) return;
      const auto probs = model.predict(batch);
      for (std::size_t i = 0; i < probs.size(); ++i)
        out << paths[i] << ',' << io::format_g9(probs[i]) << ','
            << (probs[i] >= 0.5 ? 1 : 0) << '\n';
      batch.clear();
      paths.clear();
    };
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json doc = json::parse(line);
      const std::string png = doc.at("beat_png_path").get<std::string>();
      batch.push_back(to_tensor(io::read_beat_image_png(png)));
      paths.push_back(png);
      if (batch.size() == 32) flush();
    }
    flush();
    return 0;
  } catch (const Error& e) {
    return fail(kExitModel, e.what());
  }
}

int run_diagnose(const RunConfig& cfg, std::optional<std::size_t> n,
                 std::optional<std::size_t> x, const std::string& from_csv,
                 const std::string& out_json) {
  try {
    BeatTally tally;
    if (!from_csv.empty()) {
      std::ifstream in(from_csv);
      if (!in) throw IoError("cannot read " + from_csv);
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++tally.n;
        const auto last_comma = line.rfind(',');
        if (line.substr(last_comma + 1) == "1") ++tally.x;
      }
    } else {
      if (!n) throw InvalidInputError("need --n or --from");
      tally.n = *n;
      tally.x = x.value_or(0);
    }

    const double posterior = posterior_arvc(tally, cfg.profile);
    json doc{{"n", tally.n},
             {"x", tally.x},
             {"sensitivity", cfg.profile.sensitivity},
             {"specificity", cfg.profile.specificity},
             {"prior", cfg.profile.prior},
             {"posterior", posterior}};
    if (out_json.empty()) {
      std::cout << doc.dump(2) << '\n';
    } else {
      std::ofstream out(out_json);
      out << doc.dump(2) << '\n';
    }
    return 0;
  } catch (const Error& e) {
    return fail(kExitModel, e.what());
  }
}

int run_curve(const RunConfig& cfg, std::size_t n, const std::string& out_csv) {
  try {
    const auto curve = posterior_curve(n, cfg.profile);
    std::ofstream out(out_csv);
    if (!out) throw IoError("cannot write " + out_csv);
    out << "x,posterior\n";
    for (const auto& [x, p] : curve) out << x << ',' << io::format_g9(p) << '\n';
    return 0;
  } catch (const Error& e) {
    return fail(kExitModel, e.what());
  }
}

int run_spectrum(const RunConfig& cfg, const std::vector<std::string>& csvs,
                 const std::string& out_table, const std::string& out_mean,
                 const std::string& label) {
  try {
    SpectrumTable table;
    table.frequencies_hz = band_grid_frequencies();
    table.cohort = label;
    for (const auto& path : csvs) {
      const Signal sig = io::read_signal_csv(path);
      const Signal detrended = detrend_median(sig, cfg.detrend);
      table.rows.push_back(banded_spectrum_row(detrended));
      table.subject_ids.push_back(stem_of(path));
    }
    io::write_spectrum_table_csv(table, out_table);
    if (!out_mean.empty())
      io::write_mean_spectrum_csv(mean_spectrum(table), out_mean);
    return 0;
  } catch (const Error& e) {
    return fail(kExitSpectral, e.what());
  }
}

int run_compare(const RunConfig& cfg, const std::string& normal_csv,
                const std::string& abnormal_csv, const std::string& out_csv) {
  try {
    const SpectrumTable normal = io::read_spectrum_table_csv(normal_csv);
    const SpectrumTable abnormal = io::read_spectrum_table_csv(abnormal_csv);
    const auto rows = compare_cohorts(normal, abnormal, cfg.alpha,
                                      cfg.seed + 0x4c494c4945ull);
    io::write_comparison_csv(rows, out_csv);
    return 0;
  } catch (const Error& e) {
    return fail(kExitSpectral, e.what());
  }
}

int run_synth(const RunConfig& cfg, std::size_t n_normal, std::size_t n_arvc,
              const std::string& out_dir, double duration_s, double speckle,
              bool strips_only) {
  try {
    fs::create_directories(out_dir);
    std::ofstream manifest;
    if (!strips_only) manifest.open(fs::path(out_dir) / "manifest.jsonl");

    const std::size_t total = n_normal + n_arvc;
    for (std::size_t pi = 0; pi < total; ++pi) {
      const bool abnormal = pi >= n_normal;
      Rng rng(cfg.seed + pi);
      const EcgParams params = abnormal ? arvc_preset(rng) : normal_preset(rng);
      const GeneratedEcg gen = generate_ecg(params, duration_s);

      char id[32];
      std::snprintf(id, sizeof(id), "%c%03zu", abnormal ? 'A' : 'N', pi);

      PaperRenderSpec spec;
      spec.dpi = cfg.calibration.dpi;
      spec.speckle_density = speckle;
      const RenderedPage page = render_paper(gen.signal, spec, cfg.seed + pi);
      const std::string strip_png = (fs::path(out_dir) / (std::string("strip_") + id + ".png")).string();
      const std::string truth_csv = (fs::path(out_dir) / (std::string("truth_") + id + ".csv")).string();
      io::write_png_gray(page.image, strip_png);
      io::write_signal_csv(gen.signal, truth_csv);

      json truth_meta{{"patient_id", id},
                      {"label", abnormal ? 1 : 0},
                      {"baseline_row", page.baseline_row},
                      {"r_times_ms", gen.r_times_ms}};
      std::ofstream tm(fs::path(out_dir) / (std::string("truth_") + id + ".json"));
      tm << truth_meta.dump(2) << '\n';

      if (strips_only) continue;

      const Signal digitized = digitize(page.image, cfg.calibration, cfg.despeckle,
                                        cfg.percentile);
      const Signal detrended = detrend_median(digitized, cfg.detrend);
      const auto peaks = detect_r_peaks(detrended);
      const auto beats = segment_beats(detrended, peaks, cfg.window_ms);
      for (std::size_t b = 0; b < beats.size(); ++b) {
        char name[48];
        std::snprintf(name, sizeof(name), "beat_%s_%03zu", id, b);
        const std::string beat_csv = (fs::path(out_dir) / (std::string(name) + ".csv")).string();
        const std::string beat_png = (fs::path(out_dir) / (std::string(name) + ".png")).string();
        io::write_signal_csv(beats[b].samples, beat_csv);
        io::write_beat_image_png(render_beat_image(beats[b]), beat_png);

        // Ground-truth landmarks of the beat nearest this window's peak.
        const double peak_ms = beats[b].samples.t0_ms +
                               static_cast<double>(beats[b].r_index) *
                                   beats[b].samples.sample_period_ms;
        const BeatLandmarks* nearest = nullptr;
        double best = 1e300;
        for (const auto& lm : gen.landmarks) {
          const double d = std::abs(lm.r_ms - peak_ms);
          if (d < best) {
            best = d;
            nearest = &lm;
          }
        }
        json landmarks;
        if (nearest != nullptr)
          landmarks = {{"r_ms", nearest->r_ms}, {"p_ms", nearest->p_ms},
                       {"q_ms", nearest->q_ms}, {"s_ms", nearest->s_ms},
                       {"t_ms", nearest->t_ms}, {"epsilon_ms", nearest->epsilon_ms}};
        json line{{"source_id", id},
                  {"patient_id", id},
                  {"label", abnormal ? 1 : 0},
                  {"lead", "V1"},
                  {"r_index", beats[b].r_index},
                  {"beat_csv_path", beat_csv},
                  {"beat_png_path", beat_png},
                  {"landmarks", landmarks}};
        manifest << line.dump() << '\n';
      }
    }
    return 0;
  } catch (const Error& e) {
    return fail(kExitDigitize, e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECG digitization, beat classification, and spectral comparison"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed_flag = 0;
  app.add_option("--config", config_path, "JSON run configuration");
  auto* seed_opt = app.add_option("--seed", seed_flag, "random seed");

  // digitize
  auto* digitize_cmd = app.add_subcommand("digitize", "scanned strip PNG -> signal CSV");
  std::string dg_image, dg_out = "signal.csv", dg_report;
  int dg_dpi = 0, dg_k = 0, dg_baseline = -1;
  double dg_c = -1.0, dg_percentile = -1.0, dg_speed = -1.0, dg_gain = -1.0;
  digitize_cmd->add_option("image", dg_image, "input PNG")->required();
  digitize_cmd->add_option("--out", dg_out, "output CSV path");
  digitize_cmd->add_option("--report", dg_report, "write a JSON digitization report");
  digitize_cmd->add_option("--dpi", dg_dpi, "scan resolution");
  digitize_cmd->add_option("--speed", dg_speed, "paper speed mm/s");
  digitize_cmd->add_option("--gain", dg_gain, "gain mm/mV");
  digitize_cmd->add_option("--k", dg_k, "despeckle extent");
  digitize_cmd->add_option("--c", dg_c, "despeckle threshold");
  digitize_cmd->add_option("--percentile", dg_percentile, "binarize percentile");
  digitize_cmd->add_option("--baseline-row", dg_baseline, "explicit baseline row");

  // segment
  auto* segment_cmd = app.add_subcommand("segment", "signal CSV -> beat files + manifest");
  std::string sg_csv, sg_out = "beats", sg_lead = "V1", sg_exclude;
  int sg_label = -1, sg_order = 0, sg_window = 0, sg_degree = -1;
  double sg_window_ms = -1.0;
  bool sg_smooth = false;
  segment_cmd->add_option("signal", sg_csv, "input signal CSV")->required();
  segment_cmd->add_option("--out", sg_out, "output directory");
  segment_cmd->add_option("--order", sg_order, "detrend median order");
  segment_cmd->add_flag("--smooth", sg_smooth, "apply Savitzky-Golay smoothing");
  segment_cmd->add_option("--smooth-window", sg_window, "smoothing window");
  segment_cmd->add_option("--smooth-degree", sg_degree, "smoothing degree");
  segment_cmd->add_option("--window-ms", sg_window_ms, "beat window in ms");
  segment_cmd->add_option("--lead", sg_lead, "lead name for sidecars");
  segment_cmd->add_option("--label", sg_label, "class label (0/1, -1 unknown)");
  segment_cmd->add_option("--exclude", sg_exclude, "comma-separated beat indices to drop");

  // train
  auto* train_cmd = app.add_subcommand("train", "manifest -> model.json + curves + metrics");
  std::string tr_manifest, tr_out = "model_out";
  double tr_lr = -1.0, tr_split = -1.0;
  long long tr_epochs = -1, tr_batch = -1, tr_repeats = -1;
  long long tr_aug_normal = 0, tr_aug_abnormal = 0;
  train_cmd->add_option("manifest", tr_manifest, "beat manifest JSONL")->required();
  train_cmd->add_option("--out", tr_out, "output directory");
  train_cmd->add_option("--lr", tr_lr, "learning rate");
  train_cmd->add_option("--epochs", tr_epochs, "training epochs");
  train_cmd->add_option("--batch", tr_batch, "batch size");
  train_cmd->add_option("--split", tr_split, "train fraction of patients");
  train_cmd->add_option("--repeats", tr_repeats, "repeated shuffled runs");
  train_cmd->add_option("--aug-normal", tr_aug_normal, "augmentation multiplier, normal class");
  train_cmd->add_option("--aug-abnormal", tr_aug_abnormal, "augmentation multiplier, abnormal class");

  // classify
  auto* classify_cmd = app.add_subcommand("classify", "model + manifest -> per-beat probabilities");
  std::string cl_model, cl_manifest, cl_out = "classify.csv";
  classify_cmd->add_option("--model", cl_model, "model JSON")->required();
  classify_cmd->add_option("manifest", cl_manifest, "beat manifest JSONL")->required();
  classify_cmd->add_option("--out", cl_out, "output CSV");

  // diagnose
  auto* diagnose_cmd = app.add_subcommand("diagnose", "beat tally -> posterior JSON");
  long long di_n = -1, di_x = -1;
  std::string di_from, di_out;
  double di_sens = -1.0, di_spec = -1.0, di_prior = -1.0;
  diagnose_cmd->add_option("--n", di_n, "beats examined");
  diagnose_cmd->add_option("--x", di_x, "beats classified abnormal");
  diagnose_cmd->add_option("--from", di_from, "classify CSV to tally");
  diagnose_cmd->add_option("--sens", di_sens, "classifier sensitivity");
  diagnose_cmd->add_option("--spec", di_spec, "classifier specificity");
  diagnose_cmd->add_option("--prior", di_prior, "disease prior");
  diagnose_cmd->add_option("--out", di_out, "output JSON (stdout when omitted)");

  // curve
  auto* curve_cmd = app.add_subcommand("curve", "posterior for x = 0..n -> CSV");
  long long cu_n = 10;
  std::string cu_out = "curve.csv";
  double cu_sens = -1.0, cu_spec = -1.0, cu_prior = -1.0;
  curve_cmd->add_option("--n", cu_n, "beats examined");
  curve_cmd->add_option("--sens", cu_sens, "classifier sensitivity");
  curve_cmd->add_option("--spec", cu_spec, "classifier specificity");
  curve_cmd->add_option("--prior", cu_prior, "disease prior");
  curve_cmd->add_option("--out", cu_out, "output CSV");

  // spectrum
  auto* spectrum_cmd = app.add_subcommand("spectrum", "signal CSVs -> cohort spectrum table");
  std::vector<std::string> sp_csvs;
  std::string sp_out = "spectra.csv", sp_mean, sp_label = "cohort";
  int sp_order = 0;
  spectrum_cmd->add_option("signals", sp_csvs, "signal CSV files")->required();
  spectrum_cmd->add_option("--out", sp_out, "output table CSV");
  spectrum_cmd->add_option("--mean", sp_mean, "also write the cohort mean CSV");
  spectrum_cmd->add_option("--label", sp_label, "cohort label");
  spectrum_cmd->add_option("--order", sp_order, "detrend median order");

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "two spectrum tables -> comparison CSV");
  std::string cm_normal, cm_abnormal, cm_out = "comparison.csv";
  double cm_alpha = -1.0;
  compare_cmd->add_option("normal", cm_normal, "normal cohort table CSV")->required();
  compare_cmd->add_option("abnormal", cm_abnormal, "abnormal cohort table CSV")->required();
  compare_cmd->add_option("--out", cm_out, "output CSV");
  compare_cmd->add_option("--alpha", cm_alpha, "significance level");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic desk-scale dataset");
  long long sy_normal = 10, sy_arvc = 10;
  std::string sy_out = "synth_out";
  double sy_duration = 10.0, sy_speckle = 0.0005;
  bool sy_strips_only = false;
  synth_cmd->add_option("--normal", sy_normal, "normal patients");
  synth_cmd->add_option("--arvc", sy_arvc, "ARVC patients");
  synth_cmd->add_option("--out", sy_out, "output directory");
  synth_cmd->add_option("--duration", sy_duration, "strip duration in seconds");
  synth_cmd->add_option("--speckle", sy_speckle, "speckle density of the renders");
  synth_cmd->add_flag("--strips-only", sy_strips_only, "skip beat extraction");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  RunConfig cfg;
  try {
    cfg = load_config(config_path);
    if (seed_opt->count() > 0) {
      cfg.seed = seed_flag;
      cfg.train.seed = seed_flag;
    } else {
      cfg.train.seed = cfg.seed;
    }

    if (*digitize_cmd) {
      if (dg_dpi > 0) cfg.calibration.dpi = dg_dpi;
      if (dg_speed > 0) cfg.calibration.paper_speed_mm_s = dg_speed;
      if (dg_gain > 0) cfg.calibration.gain_mm_mv = dg_gain;
      if (dg_k > 0) cfg.despeckle.k = dg_k;
      if (dg_c > 0) cfg.despeckle.c = dg_c;
      if (dg_percentile > 0) cfg.percentile = dg_percentile;
    }
    if (*segment_cmd) {
      if (sg_order > 0) cfg.detrend.order = sg_order;
      if (sg_smooth) cfg.smooth_enabled = true;
      if (sg_window > 0) cfg.smooth.window = sg_window;
      if (sg_degree >= 0) cfg.smooth.degree = sg_degree;
      if (sg_window_ms > 0) cfg.window_ms = sg_window_ms;
    }
    if (*train_cmd) {
      if (tr_lr > 0) cfg.train.learning_rate = tr_lr;
      if (tr_epochs > 0) cfg.train.epochs = static_cast<std::size_t>(tr_epochs);
      if (tr_batch > 0) cfg.train.batch_size = static_cast<std::size_t>(tr_batch);
      if (tr_split > 0) cfg.train.split_ratio = tr_split;
      if (tr_repeats > 0) cfg.repeats = static_cast<std::size_t>(tr_repeats);
    }
    if (*diagnose_cmd) {
      if (di_sens >= 0) cfg.profile.sensitivity = di_sens;
      if (di_spec >= 0) cfg.profile.specificity = di_spec;
      if (di_prior > 0) cfg.profile.prior = di_prior;
    }
    if (*curve_cmd) {
      if (cu_sens >= 0) cfg.profile.sensitivity = cu_sens;
      if (cu_spec >= 0) cfg.profile.specificity = cu_spec;
      if (cu_prior > 0) cfg.profile.prior = cu_prior;
    }
    if (*spectrum_cmd && sp_order > 0) cfg.detrend.order = sp_order;
    if (*compare_cmd && cm_alpha > 0) cfg.alpha = cm_alpha;
    cfg.validate();
  } catch (const Error& e) {
    return fail(kExitUsage, e.what());
  }

  if (*digitize_cmd) {
    std::optional<int> baseline;
    if (dg_baseline >= 0) baseline = dg_baseline;
    return run_digitize(cfg, dg_image, dg_out, dg_report, baseline);
  }
  if (*segment_cmd) {
    std::vector<std::size_t> exclude;
    if (!sg_exclude.empty()) {
      std::stringstream ss(sg_exclude);
      std::string tok;
      while (std::getline(ss, tok, ',')) exclude.push_back(std::stoul(tok));
    }
    return run_segment(cfg, sg_csv, sg_out, sg_lead, sg_label, exclude);
  }
  if (*train_cmd)
    return run_train(cfg, tr_manifest, tr_out, static_cast<std::size_t>(tr_aug_normal),
                     static_cast<std::size_t>(tr_aug_abnormal));
  if (*classify_cmd) return run_classify(cl_model, cl_manifest, cl_out);
  if (*diagnose_cmd) {
    std::optional<std::size_t> n, x;
    if (di_n >= 0) n = static_cast<std::size_t>(di_n);
    if (di_x >= 0) x = static_cast<std::size_t>(di_x);
    return run_diagnose(cfg, n, x, di_from, di_out);
  }
  if (*curve_cmd) return run_curve(cfg, static_cast<std::size_t>(cu_n), cu_out);
  if (*spectrum_cmd) return run_spectrum(cfg, sp_csvs, sp_out, sp_mean, sp_label);
  if (*compare_cmd) return run_compare(cfg, cm_normal, cm_abnormal, cm_out);
  if (*synth_cmd)
    return run_synth(cfg, static_cast<std::size_t>(sy_normal),
                     static_cast<std::size_t>(sy_arvc), sy_out, sy_duration, sy_speckle,
                     sy_strips_only);
  return kExitUsage;
}
