// Command-line front end: featurize -> voxelize -> train -> predict ->
// evaluate -> analyze, plus dump-config. Every artifact embeds the tool
// version, a hash of the effective settings and the seed; writes go through
// a temp file + rename so partial outputs never land under the final name.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "emocpd/analysis.hpp"
#include "emocpd/config.hpp"
#include "emocpd/dataset.hpp"
#include "emocpd/errors.hpp"
#include "emocpd/featurize.hpp"
#include "emocpd/metrics.hpp"
#include "emocpd/net.hpp"
#include "emocpd/structure.hpp"
#include "emocpd/train.hpp"
#include "emocpd/version.hpp"
#include "emocpd/voxelize.hpp"

namespace {

using namespace emocpd;

constexpr int kExitOk = 0;
constexpr int kExitGeneric = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitFormat = 4;
constexpr int kExitConfig = 5;

std::string default_data_dir() {
#ifdef EMOCPD_DATA_DIR
  return EMOCPD_DATA_DIR;
#else
  return "data";
#endif
}

void write_text_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out << content;
    if (!out) throw IoError("failed writing '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

// Canonical settings text -> hash; also reused as sidecar/metadata content.
std::string settings_text(const std::map<std::string, std::string>& settings) {
  std::ostringstream out;
  for (const auto& [k, v] : settings) out << k << " = " << v << "\n";
  return out.str();
}

struct TableOptions {
  std::string charges_path;
  std::string radii_path;
  double probe = 1.4;
  int points = 960;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--charges", charges_path, "partial-charge table (residue atom charge rows)");
    cmd->add_option("--radii", radii_path, "vdW radii table");
    cmd->add_option("--probe", probe, "solvent probe radius in Angstroms")->capture_default_str();
    cmd->add_option("--sasa-points", points, "sphere sample points per atom")
        ->capture_default_str();
  }

  ChargeTable charges() const {
    std::string path =
        charges_path.empty() ? default_data_dir() + "/charges.txt" : charges_path;
    return ChargeTable::load_file(path);
  }
  RadiiTable radii() const {
    std::string path = radii_path.empty() ? default_data_dir() + "/radii.txt" : radii_path;
    return RadiiTable::load_file(path);
  }
  SasaParams sasa_params() const { return SasaParams{probe, points}; }
};

ProteinModel load_structure(const std::string& spec, bool include_hetatm,
                            std::set<char>* chains_out) {
  // "path[:chains]", e.g. structure.pdb:AB
  std::string path = spec;
  std::set<char> chains;
  auto colon = spec.rfind(':');
  if (colon != std::string::npos && colon > 1 && spec.find('/', colon) == std::string::npos &&
      spec.substr(colon + 1).size() <= 8 && !spec.substr(colon + 1).empty() &&
      spec.substr(colon + 1).find('.') == std::string::npos) {
    path = spec.substr(0, colon);
    for (char c : spec.substr(colon + 1)) chains.insert(c);
  }
  std::string stem = std::filesystem::path(path).stem().string();
  ProteinModel model;
  if (std::filesystem::path(path).extension() == ".pqr") {
    model = parse_pqr_file(path);
  } else {
    PdbParseOptions options;
    options.include_hetatm = include_hetatm;
    model = parse_pdb_file(path, options);
  }
  model.source_id = stem;
  if (!chains.empty()) model = select_chains(model, chains);
  if (chains_out) *chains_out = chains;
  model.sites = extract_sites(model.atoms, &model.site_report);
  return model;
}

// ---------------------------------------------------------------------------
// featurize
// ---------------------------------------------------------------------------

struct FeaturizeArgs {
  std::string input;
  std::string output;
  std::string chains;
  bool include_hetatm = false;
  TableOptions tables;
};

int run_featurize(const FeaturizeArgs& args) {
  std::string spec = args.input;
  if (!args.chains.empty()) spec += ":" + args.chains;
  ProteinModel model = load_structure(spec, args.include_hetatm, nullptr);

  ChargeAssignment assignment;
  FeatureMap features =
      featurize_model(model, args.tables.charges(), args.tables.radii(),
                      args.tables.sasa_params(), &assignment);

  std::map<std::string, std::string> settings = {
      {"cmd", "featurize"},
      {"input", args.input},
      {"chains", args.chains},
      {"probe", format_double(args.tables.probe)},
      {"sasa_points", std::to_string(args.tables.points)},
  };
  std::string hash = config_hash_hex(settings_text(settings));

  static const char* kClassNames[] = {"C", "N", "O", "S", "H"};
  std::ostringstream out;
  out << "# tool_version=" << kToolVersion << " config_hash=" << hash << " seed=0\n";
  out << "serial,element_class,fc,sasa\n";
  for (size_t i = 0; i < model.atoms.size(); ++i) {
    if (!features[i]) continue;
    const AtomFeature& f = *features[i];
    int cls = 0;
    for (int k = 0; k < 5; ++k)
      if (f.onehot[static_cast<size_t>(k)] == 1.0) cls = k;
    out << model.atoms[i].serial << "," << kClassNames[cls] << "," << format_double(f.fc) << ","
        << format_double(f.sasa) << "\n";
  }
  write_text_atomic(args.output, out.str());
  std::cerr << "featurize: " << model.atoms.size() << " atoms, " << assignment.table_misses
            << " charge-table misses\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// voxelize
// ---------------------------------------------------------------------------

struct VoxelizeArgs {
  std::vector<std::string> inputs;
  std::string output;
  uint64_t seed = 0;
  int64_t sample_threshold = 200;
  int64_t sample_cap = 100;
  bool include_hetatm = false;
  TableOptions tables;
};

int run_voxelize(const VoxelizeArgs& args) {
  if (args.sample_cap > args.sample_threshold)
    throw ConfigError("sampling cap exceeds trigger threshold");

  ChargeTable charge_table = args.tables.charges();
  RadiiTable radii_table = args.tables.radii();

  Rng file_seeds(args.seed);
  std::vector<MicroEnvGrid> grids;
  int skipped_frames = 0;
  for (const std::string& spec : args.inputs) {
    uint64_t file_seed = file_seeds.next_u64();
    ProteinModel model = load_structure(spec, args.include_hetatm, nullptr);
    FeatureMap features =
        featurize_model(model, charge_table, radii_table, args.tables.sasa_params());
    std::vector<ResidueSite> sites =
        sample_sites(model.sites, static_cast<size_t>(args.sample_threshold),
                     static_cast<size_t>(args.sample_cap), file_seed);
    for (const ResidueSite& site : sites) {
      try {
        grids.push_back(build_grid(site, features, model.atoms, model.source_id));
      } catch (const Error&) {
        ++skipped_frames;  // degenerate local frame
      }
    }
  }
  if (grids.empty()) throw Error("no grids produced");

  std::map<std::string, std::string> settings = {
      {"cmd", "voxelize"},
      {"seed", std::to_string(args.seed)},
      {"sample_threshold", std::to_string(args.sample_threshold)},
      {"sample_cap", std::to_string(args.sample_cap)},
      {"probe", format_double(args.tables.probe)},
      {"sasa_points", std::to_string(args.tables.points)},
  };
  for (size_t i = 0; i < args.inputs.size(); ++i)
    settings["input." + std::to_string(i)] = args.inputs[i];
  std::string hash = config_hash_hex(settings_text(settings));

  std::string tmp = args.output + ".tmp";
  write_grid_file(tmp, grids);
  std::filesystem::rename(tmp, args.output);

  nlohmann::json meta;
  meta["tool_version"] = std::string(kToolVersion);
  meta["config_hash"] = hash;
  meta["seed"] = args.seed;
  meta["samples"] = grids.size();
  meta["skipped_degenerate_frames"] = skipped_frames;
  write_text_atomic(args.output + ".meta.json", meta.dump(2) + "\n");

  std::cerr << "voxelize: wrote " << grids.size() << " grids to " << args.output << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::vector<std::string> data;
  std::vector<std::string> val;
  std::string manifest;
  std::string config_path;
  std::string output = "model.emoc";
  std::string history_path;
  double lr = -1;
  double weight_decay = -1;
  int64_t batch_size = -1;
  int64_t epochs = -1;
  int64_t val_every = -1;
  int64_t max_steps = -1;
  uint64_t seed = 0;
  bool seed_given = false;
};

int run_train(const TrainArgs& args) {
  KeyValues kv;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw IoError("cannot open config '" + args.config_path + "'");
    kv = parse_key_values(in);
  }
  TrainConfig train_cfg = TrainConfig::from_key_values(kv);
  if (args.lr >= 0) train_cfg.lr = args.lr;
  if (args.weight_decay >= 0) train_cfg.weight_decay = args.weight_decay;
  if (args.batch_size > 0) train_cfg.batch_size = args.batch_size;
  if (args.epochs > 0) train_cfg.epochs = args.epochs;
  if (args.val_every >= 0) train_cfg.val_every = args.val_every;
  if (args.max_steps >= 0) train_cfg.max_steps = args.max_steps;
  if (args.seed_given) train_cfg.seed = args.seed;

  nn::ModelConfig model_cfg = nn::ModelConfig::from_key_values(kv);
  if (!kv.count("model.init_seed")) model_cfg.init_seed = train_cfg.seed;
  train_cfg.validate();
  model_cfg.validate();

  GridDataset train_set = args.manifest.empty() ? GridDataset::from_files(args.data)
                                                : GridDataset::from_manifest(args.manifest);
  GridDataset val_set = GridDataset::from_files(args.val);

  auto histogram = train_set.class_histogram();
  std::cerr << "train: " << train_set.size() << " samples, " << val_set.size()
            << " validation samples\n";
  std::cerr << "train: class histogram:";
  for (int64_t c : histogram) std::cerr << " " << c;
  std::cerr << "\n";

  std::string canonical = model_cfg.to_text() + train_cfg.to_text();
  std::string hash = config_hash_hex(canonical);

  nn::EmoModel model(model_cfg);
  std::map<std::string, std::string> metadata = {
      {"meta.tool_version", std::string(kToolVersion)},
      {"meta.config_hash", hash},
      {"meta.train_seed", std::to_string(train_cfg.seed)},
  };

  std::string tmp = args.output + ".tmp";
  TrainResult result = train_model(model, train_set, val_set, train_cfg, tmp, metadata);
  std::filesystem::rename(tmp, args.output);

  if (!args.history_path.empty())
    write_text_atomic(args.history_path,
                      history_csv(result.history, std::string(kToolVersion), hash, train_cfg.seed));

  std::cerr << "train: best validation accuracy " << result.best_val_accuracy << " at step "
            << result.best_step << " (" << result.steps_run << " steps)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// predict / evaluate
// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::vector<std::string> data;
  std::string output;
  int topk = 0;
  int64_t batch_size = 64;
};

std::vector<SitePrediction> predictions_for(nn::EmoModel& model,
                                            const std::vector<MicroEnvGrid>& grids,
                                            int64_t batch_size) {
  std::vector<ProbabilityRow> probs = predict(model, grids, batch_size);
  std::vector<SitePrediction> rows;
  rows.reserve(grids.size());
  for (size_t i = 0; i < grids.size(); ++i) {
    SitePrediction p;
    // site_id is "<source>|<chain>|<seq>"
    const std::string& id = grids[i].site_id;
    auto first = id.find('|');
    auto second = first == std::string::npos ? std::string::npos : id.find('|', first + 1);
    if (second != std::string::npos) {
      p.structure_id = id.substr(0, first);
      p.chain_id = first + 1 < id.size() ? id[first + 1] : ' ';
      p.residue_seq = id.substr(second + 1);
    } else {
      p.structure_id = id;
      p.residue_seq = "0";
    }
    p.true_class = grids[i].label;
    p.probabilities = probs[i];
    rows.push_back(std::move(p));
  }
  return rows;
}

int run_predict(const PredictArgs& args) {
  nn::LoadedCheckpoint loaded = nn::load_checkpoint(args.checkpoint);
  GridDataset dataset = GridDataset::from_files(args.data);

  std::map<std::string, std::string> settings = {
      {"cmd", "predict"},
      {"checkpoint_config_hash", get_string(loaded.metadata, "meta.config_hash", "")},
      {"topk", std::to_string(args.topk)},
  };
  for (size_t i = 0; i < args.data.size(); ++i)
    settings["input." + std::to_string(i)] = args.data[i];
  std::string hash = config_hash_hex(settings_text(settings));
  uint64_t seed = get_u64(loaded.metadata, "meta.train_seed", 0);

  std::vector<SitePrediction> rows =
      predictions_for(loaded.model, dataset.samples, args.batch_size);
  write_text_atomic(args.output, predictions_csv(rows, std::string(kToolVersion), hash, seed));

  if (args.topk > 0) {
    if (args.topk > aa::kNumClasses) throw ConfigError("--topk must be <= 20");
    std::ostringstream out;
    out << "# tool_version=" << kToolVersion << " config_hash=" << hash << " seed=" << seed
        << "\n";
    out << "structure,chain,seq,rank,class,probability\n";
    for (const SitePrediction& p : rows) {
      std::vector<int> order(aa::kNumClasses);
      for (int k = 0; k < aa::kNumClasses; ++k) order[static_cast<size_t>(k)] = k;
      std::stable_sort(order.begin(), order.end(), [&p](int a, int b) {
        return p.probabilities[static_cast<size_t>(a)] > p.probabilities[static_cast<size_t>(b)];
      });
      for (int rank = 0; rank < args.topk; ++rank) {
        int cls = order[static_cast<size_t>(rank)];
        out << p.structure_id << "," << p.chain_id << "," << p.residue_seq << "," << rank + 1
            << "," << aa::three_letter(cls) << ","
            << format_double(p.probabilities[static_cast<size_t>(cls)]) << "\n";
      }
    }
    write_text_atomic(args.output + ".topk.csv", out.str());
  }
  std::cerr << "predict: " << rows.size() << " sites\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::string checkpoint;
  std::vector<std::string> data;
  std::string output;
  std::string confusion_path;
  int64_t batch_size = 64;
};

int run_evaluate(const EvaluateArgs& args) {
  nn::LoadedCheckpoint loaded = nn::load_checkpoint(args.checkpoint);
  GridDataset dataset = GridDataset::from_files(args.data);

  std::vector<ProbabilityRow> probs = predict(loaded.model, dataset.samples, args.batch_size);
  std::vector<int> labels;
  labels.reserve(dataset.samples.size());
  for (const MicroEnvGrid& g : dataset.samples) labels.push_back(g.label);

  MetricsReport report = evaluate_predictions(probs, labels);

  std::map<std::string, std::string> settings = {
      {"cmd", "evaluate"},
      {"checkpoint_config_hash", get_string(loaded.metadata, "meta.config_hash", "")},
  };
  for (size_t i = 0; i < args.data.size(); ++i)
    settings["input." + std::to_string(i)] = args.data[i];
  std::string hash = config_hash_hex(settings_text(settings));
  uint64_t seed = get_u64(loaded.metadata, "meta.train_seed", 0);

  write_text_atomic(args.output, metrics_report_json(report, std::string(kToolVersion), hash, seed));
  if (!args.confusion_path.empty())
    write_text_atomic(args.confusion_path, confusion_csv(report.confusion));
  std::cerr << "evaluate: accuracy " << report.accuracy << " over " << report.sample_count
            << " samples\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string predictions;
  std::string output;
  std::string scatter_path;
  std::string histogram_path;
  double alpha = 0.01;
  double bin_width = 0.01;
};

int run_analyze(const AnalyzeArgs& args) {
  std::ifstream in(args.predictions);
  if (!in) throw IoError("cannot open '" + args.predictions + "'");
  std::vector<SitePrediction> rows = parse_predictions_csv(in);
  if (rows.empty()) throw Error("predictions file has no rows");

  std::vector<StructureResult> structures = per_structure_accuracy(rows);
  CorrelationReport report = correlation_report(structures, args.alpha);
  AccuracyHistogram histogram = accuracy_histogram(structures, args.bin_width);

  std::map<std::string, std::string> settings = {
      {"cmd", "analyze"},
      {"predictions", args.predictions},
      {"alpha", format_double(args.alpha)},
      {"bin_width", format_double(args.bin_width)},
  };
  std::string hash = config_hash_hex(settings_text(settings));

  write_text_atomic(args.output,
                    correlation_report_json(report, std::string(kToolVersion), hash, 0));
  if (!args.scatter_path.empty())
    write_text_atomic(args.scatter_path, group_scatter_csv(structures, report.classification));
  if (!args.histogram_path.empty()) write_text_atomic(args.histogram_path, histogram_csv(histogram));

  std::cerr << "analyze: " << structures.size() << " structures\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"microenvironment-based protein sequence design pipeline"};
  app.require_subcommand(1);

  FeaturizeArgs feat;
  CLI::App* featurize_cmd = app.add_subcommand("featurize", "per-atom features as CSV");
  featurize_cmd->add_option("input", feat.input, "PDB or PQR file")->required();
  featurize_cmd->add_option("-o,--output", feat.output, "output CSV")->required();
  featurize_cmd->add_option("--chains", feat.chains, "chain letters to keep");
  featurize_cmd->add_flag("--include-hetatm", feat.include_hetatm, "parse HETATM records too");
  feat.tables.add_flags(featurize_cmd);

  VoxelizeArgs vox;
  CLI::App* voxelize_cmd = app.add_subcommand("voxelize", "build a microenvironment grid dataset");
  voxelize_cmd->add_option("inputs", vox.inputs, "structure files, each 'path[:chains]'")
      ->required();
  voxelize_cmd->add_option("-o,--output", vox.output, "output grid file")->required();
  voxelize_cmd->add_option("--seed", vox.seed, "sampling seed")->capture_default_str();
  voxelize_cmd->add_option("--sample-threshold", vox.sample_threshold,
                           "subsample proteins with more residues than this")
      ->capture_default_str();
  voxelize_cmd->add_option("--sample-cap", vox.sample_cap, "residues kept when subsampling")
      ->capture_default_str();
  voxelize_cmd->add_flag("--include-hetatm", vox.include_hetatm, "parse HETATM records too");
  vox.tables.add_flags(voxelize_cmd);

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model on grid datasets");
  train_cmd->add_option("--data", tr.data, "training grid file(s)");
  train_cmd->add_option("--manifest", tr.manifest, "text file listing training grid files");
  train_cmd->add_option("--val", tr.val, "validation grid file(s)")->required();
  train_cmd->add_option("-c,--config", tr.config_path, "model/train config file");
  train_cmd->add_option("-o,--output", tr.output, "checkpoint path")->capture_default_str();
  train_cmd->add_option("--history", tr.history_path, "per-step history CSV");
  train_cmd->add_option("--lr", tr.lr, "learning rate override");
  train_cmd->add_option("--weight-decay", tr.weight_decay, "weight decay override");
  train_cmd->add_option("--batch-size", tr.batch_size, "batch size override");
  train_cmd->add_option("--epochs", tr.epochs, "epoch count override");
  train_cmd->add_option("--val-every", tr.val_every, "validation cadence in steps");
  train_cmd->add_option("--max-steps", tr.max_steps, "hard step limit (0 = all epochs)");
  train_cmd->add_option("--seed", tr.seed, "training seed")->each([&tr](const std::string&) {
    tr.seed_given = true;
  });

  PredictArgs pr;
  CLI::App* predict_cmd = app.add_subcommand("predict", "per-site class probabilities");
  predict_cmd->add_option("--checkpoint", pr.checkpoint, "model checkpoint")->required();
  predict_cmd->add_option("--data", pr.data, "grid file(s)")->required();
  predict_cmd->add_option("-o,--output", pr.output, "predictions CSV")->required();
  predict_cmd->add_option("--topk", pr.topk, "also write the top-K ranked classes per site");
  predict_cmd->add_option("--batch-size", pr.batch_size, "inference batch size")
      ->capture_default_str();

  EvaluateArgs ev;
  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "metrics report for a dataset");
  evaluate_cmd->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
  evaluate_cmd->add_option("--data", ev.data, "grid file(s)")->required();
  evaluate_cmd->add_option("-o,--output", ev.output, "metrics JSON")->required();
  evaluate_cmd->add_option("--confusion", ev.confusion_path, "confusion matrix CSV");
  evaluate_cmd->add_option("--batch-size", ev.batch_size, "inference batch size")
      ->capture_default_str();

  AnalyzeArgs an;
  CLI::App* analyze_cmd = app.add_subcommand("analyze", "composition/accuracy correlation study");
  analyze_cmd->add_option("--predictions", an.predictions, "predictions CSV")->required();
  analyze_cmd->add_option("-o,--output", an.output, "report JSON")->required();
  analyze_cmd->add_option("--scatter", an.scatter_path, "per-structure scatter CSV");
  analyze_cmd->add_option("--histogram", an.histogram_path, "accuracy histogram CSV");
  analyze_cmd->add_option("--alpha", an.alpha, "significance threshold")->capture_default_str();
  analyze_cmd->add_option("--bin-width", an.bin_width, "histogram bin width")
      ->capture_default_str();

  CLI::App* dump_cmd = app.add_subcommand("dump-config", "print the full default config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (featurize_cmd->parsed()) return run_featurize(feat);
    if (voxelize_cmd->parsed()) return run_voxelize(vox);
    if (train_cmd->parsed()) return run_train(tr);
    if (predict_cmd->parsed()) return run_predict(pr);
    if (evaluate_cmd->parsed()) return run_evaluate(ev);
    if (analyze_cmd->parsed()) return run_analyze(an);
    if (dump_cmd->parsed()) {
      std::cout << nn::ModelConfig().to_text() << TrainConfig().to_text()
                << "voxelize.sample_threshold = 200\n"
                << "voxelize.sample_cap = 100\n"
                << "featurize.probe = " << format_double(SasaParams{}.probe_radius) << "\n"
                << "featurize.sasa_points = " << SasaParams{}.n_points << "\n";
      return kExitOk;
    }
  } catch (const IoError& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "error: format: " << e.what() << "\n";
    return kExitFormat;
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "error: parse: " << e.what() << "\n";
    return kExitFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitGeneric;
  }
  return kExitUsage;
}
