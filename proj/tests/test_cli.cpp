#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "emocpd/analysis.hpp"
#include "emocpd/config.hpp"
#include "emocpd/metrics.hpp"
#include "emocpd/voxelize.hpp"

using namespace emocpd;

namespace {

const char* kCli = EMOCPD_CLI_PATH;

int run(const std::string& args) {
  std::string cmd = std::string(kCli) + " " + args + " 2>cli_stderr.log";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string data_path(const std::string& name) {
  return std::string(EMOCPD_TEST_DATA_DIR) + "/" + name;
}

// Two complete residues, enough for two grids. Residue names are
// parameterized so several distinct "structures" can share the geometry.
void write_two_residue_pdb(const std::string& path, const std::string& res1 = "ALA",
                           const std::string& res2 = "SER") {
  std::ofstream out(path);
  std::string text =
      "ATOM      1  N   ALA A   1       0.000   0.000   0.000  1.00  0.00           N  \n"
      "ATOM      2  CA  ALA A   1       1.458   0.000   0.000  1.00  0.00           C  \n"
      "ATOM      3  C   ALA A   1       2.009   1.420   0.000  1.00  0.00           C  \n"
      "ATOM      4  O   ALA A   1       2.910   1.743   0.776  1.00  0.00           O  \n"
      "ATOM      5  CB  ALA A   1       1.989  -0.768  -1.202  1.00  0.00           C  \n"
      "ATOM      6  N   SER A   2       1.463   2.263  -0.872  1.00  0.00           N  \n"
      "ATOM      7  CA  SER A   2       1.899   3.650  -0.974  1.00  0.00           C  \n"
      "ATOM      8  C   SER A   2       1.768   4.370   0.364  1.00  0.00           C  \n"
      "ATOM      9  O   SER A   2       2.693   5.057   0.797  1.00  0.00           O  \n"
      "ATOM     10  CB  SER A   2       1.098   4.381  -2.042  1.00  0.00           C  \n"
      "ATOM     11  OG  SER A   2       1.208   3.900  -3.378  1.00  0.00           O  \n"
      "END\n";
  for (size_t pos = text.find("ALA"); pos != std::string::npos;
       pos = text.find("ALA", pos + res1.size()))
    text.replace(pos, 3, res1);
  for (size_t pos = text.find("SER"); pos != std::string::npos;
       pos = text.find("SER", pos + res2.size()))
    text.replace(pos, 3, res2);
  out << text;
}

}  // namespace

TEST_CASE("voxelize on a two-residue structure yields two samples") {
  write_two_residue_pdb("two_res.pdb");
  REQUIRE(run("voxelize two_res.pdb -o two_res.emog --seed 4") == 0);
  std::vector<MicroEnvGrid> grids = read_grid_file("two_res.emog");
  REQUIRE(grids.size() == 2);
  CHECK(grids[0].label == aa::class_index("ALA"));
  CHECK(grids[1].label == aa::class_index("SER"));
  CHECK(grids[0].site_id == "two_res|A|1");

  SUBCASE("sidecar metadata records version, hash and seed") {
    std::string meta = slurp("two_res.emog.meta.json");
    CHECK(meta.find("tool_version") != std::string::npos);
    CHECK(meta.find("config_hash") != std::string::npos);
    CHECK(meta.find("\"seed\": 4") != std::string::npos);
  }

  SUBCASE("same seed reruns are byte-identical") {
    std::string first = slurp("two_res.emog");
    std::string first_meta = slurp("two_res.emog.meta.json");
    REQUIRE(run("voxelize two_res.pdb -o two_res.emog --seed 4") == 0);
    CHECK(slurp("two_res.emog") == first);
    CHECK(slurp("two_res.emog.meta.json") == first_meta);
  }
}

TEST_CASE("distinct exit codes per failure class") {
  CHECK(run("voxelize missing_file.pdb -o x.emog") == 3);     // unreadable input
  CHECK(run("--definitely-not-a-flag") == 2);                 // usage
  std::ofstream bad("bad.emog", std::ios::binary);
  bad << "JUNKJUNKJUNKJUNK";
  bad.close();
  CHECK(run("train --data bad.emog --val bad.emog -o t.emoc") == 4);  // format
  CHECK(run("voxelize two_res.pdb -o x.emog --sample-cap 300 --sample-threshold 100") == 5);
}

TEST_CASE("featurize emits a per-atom CSV") {
  write_two_residue_pdb("two_res.pdb");
  REQUIRE(run("featurize two_res.pdb -o two_res_features.csv") == 0);
  std::string csv = slurp("two_res_features.csv");
  CHECK(csv.find("# tool_version=") == 0);
  CHECK(csv.find("serial,element_class,fc,sasa") != std::string::npos);
  // 11 atoms + header comment + column row
  int lines = 0;
  for (char ch : csv)
    if (ch == '\n') ++lines;
  CHECK(lines == 13);
}

TEST_CASE("full pipeline: voxelize, train, predict, evaluate, analyze") {
  // Small but real: the helix fixture through every subcommand.
  {
    std::ofstream cfg("pipeline_config.txt");
    cfg << "model.stem_f1 = 4\nmodel.stem_f2 = 4\n"
           "model.stage1_f = 4\nmodel.stage1_blocks = 1\n"
           "model.down1_f1 = 4\nmodel.down1_f2 = 8\n"
           "model.stage2_f = 8\nmodel.stage2_blocks = 1\n"
           "model.down2_f1 = 8\nmodel.down2_f2 = 8\n"
           "model.stage3_f = 8\nmodel.stage3_blocks = 1\nmodel.stage3_heads = 2\n"
           "model.down3_f1 = 8\nmodel.down3_f2 = 8\n"
           "model.stage4_f = 8\nmodel.stage4_blocks = 1\nmodel.stage4_heads = 2\n"
           "model.mlp_hidden = 16\n"
           "train.lr = 0.001\ntrain.weight_decay = 0\ntrain.batch_size = 16\n"
           "train.epochs = 10\ntrain.max_steps = 12\ntrain.val_every = 0\ntrain.seed = 11\n";
  }

  REQUIRE(run("voxelize " + data_path("toy_helix.pdb") + " -o helix.emog --seed 11") == 0);
  write_two_residue_pdb("st_b.pdb", "LEU", "ASN");
  write_two_residue_pdb("st_c.pdb", "TYR", "LYS");
  REQUIRE(run("voxelize " + data_path("toy_helix.pdb") + " st_b.pdb st_c.pdb"
              " -o mixed.emog --seed 12") == 0);
  REQUIRE(run("train --data helix.emog --val helix.emog -c pipeline_config.txt"
              " -o helix.emoc --history helix_history.csv") == 0);
  REQUIRE(run("predict --checkpoint helix.emoc --data mixed.emog -o helix_pred.csv --topk 3") == 0);
  REQUIRE(run("evaluate --checkpoint helix.emoc --data helix.emog -o helix_metrics.json"
              " --confusion helix_confusion.csv") == 0);
  REQUIRE(run("analyze --predictions helix_pred.csv -o helix_report.json"
              " --scatter helix_scatter.csv --histogram helix_hist.csv") == 0);

  {
    // artifacts have the declared shapes
    std::vector<MicroEnvGrid> grids = read_grid_file("helix.emog");
    CHECK(grids.size() == 66);

    std::string history = slurp("helix_history.csv");
    CHECK(history.find("step,train_loss,train_acc,val_acc") != std::string::npos);

    std::ifstream pred("helix_pred.csv");
    std::vector<SitePrediction> rows = parse_predictions_csv(pred);
    CHECK(rows.size() == 70);  // helix + two 2-residue structures
    std::set<std::string> ids;
    for (const auto& r : rows) ids.insert(r.structure_id);
    CHECK(ids.size() == 3);

    std::string metrics = slurp("helix_metrics.json");
    CHECK(metrics.find("\"accuracy\"") != std::string::npos);
    CHECK(metrics.find("\"topk\"") != std::string::npos);
    CHECK(metrics.find("\"per_class\"") != std::string::npos);

    std::string topk = slurp("helix_pred.csv.topk.csv");
    CHECK(topk.find("structure,chain,seq,rank,class,probability") != std::string::npos);

    std::string report = slurp("helix_report.json");
    CHECK(report.find("\"per_amino_acid\"") != std::string::npos);
  }

  {
    // pipeline reruns are byte-identical
    std::string ckpt = slurp("helix.emoc");
    std::string pred = slurp("helix_pred.csv");
    std::string metrics = slurp("helix_metrics.json");
    REQUIRE(run("train --data helix.emog --val helix.emog -c pipeline_config.txt"
                " -o helix2.emoc --history helix_history2.csv") == 0);
    REQUIRE(run("predict --checkpoint helix2.emoc --data mixed.emog -o helix_pred2.csv --topk 3") ==
            0);
    REQUIRE(run("evaluate --checkpoint helix2.emoc --data helix.emog -o helix_metrics2.json") ==
            0);
    CHECK(slurp("helix2.emoc") == ckpt);
    CHECK(slurp("helix_pred2.csv") == pred);
    CHECK(slurp("helix_metrics2.json") == metrics);
  }
}

TEST_CASE("dump-config emits parseable full-precision defaults") {
  REQUIRE(std::system((std::string(kCli) + " dump-config > dumped_config.txt").c_str()) == 0);
  std::ifstream in("dumped_config.txt");
  KeyValues kv = parse_key_values(in);
  CHECK(get_int(kv, "model.stem_f1", -1) == 16);
  CHECK(get_int(kv, "model.mlp_hidden", -1) == 720);
  CHECK(get_double(kv, "train.lr", 0.0) == 1e-5);
  CHECK(get_double(kv, "train.weight_decay", 0.0) == 1e-3);
  CHECK(get_int(kv, "train.batch_size", -1) == 150);
  CHECK(get_int(kv, "train.epochs", -1) == 8);
  CHECK(get_int(kv, "voxelize.sample_threshold", -1) == 200);
  CHECK(get_int(kv, "voxelize.sample_cap", -1) == 100);
}
