// Acceptance suite: one criterion per run() entry, one PASS/FAIL line each,
// exit code = number of failures. Heavier fixtures than the unit tests, run
// end to end.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "emocpd/adam.hpp"
#include "emocpd/analysis.hpp"
#include "emocpd/dataset.hpp"
#include "emocpd/featurize.hpp"
#include "emocpd/metrics.hpp"
#include "emocpd/net.hpp"
#include "emocpd/structure.hpp"
#include "emocpd/train.hpp"
#include "emocpd/voxelize.hpp"

#include "oracles.hpp"

using namespace emocpd;
using namespace emocpd::nn;
using oracles::gradcheck;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, bool requires_grad = false, double scale = 1.0) {
  std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
  for (double& v : data) v = scale * (2.0 * rng.uniform() - 1.0);
  Tensor t = Tensor::from_data(shape, std::move(data));
  t.set_requires_grad(requires_grad);
  return t;
}

std::string data_path(const std::string& name) {
  return std::string(EMOCPD_TEST_DATA_DIR) + "/" + name;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ModelConfig overfit_config() {
  ModelConfig c;
  c.stem_f1 = 8;
  c.stem_f2 = 8;
  c.stage1_f = 8;
  c.stage1_blocks = 2;
  c.down1_f1 = 8;
  c.down1_f2 = 12;
  c.stage2_f = 12;
  c.stage2_blocks = 2;
  c.down2_f1 = 12;
  c.down2_f2 = 16;
  c.stage3_f = 16;
  c.stage3_blocks = 2;
  c.stage3_heads = 4;
  c.down3_f1 = 16;
  c.down3_f2 = 16;
  c.stage4_f = 16;
  c.stage4_blocks = 2;
  c.stage4_heads = 4;
  c.mlp_hidden = 64;
  c.init_seed = 31;
  return c;
}

// ---------------------------------------------------------------------------
// 1. Gradient suite
// ---------------------------------------------------------------------------

bool criterion_gradients(std::string& detail) {
  auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name = "-";
  auto check = [&](const char* name, double err) {
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  };

  Rng rng(101);
  {  // operators
    Tensor x = random_tensor({2, 2, 3, 3, 3}, rng, true);
    Tensor w = random_tensor({3, 2, 3, 3, 3}, rng, true);
    Tensor b = random_tensor({3}, rng, true);
    check("conv3d k3", gradcheck([&] { return sum_all(mul(conv3d(x, w, b, 1, 1),
                                                          conv3d(x, w, b, 1, 1))); },
                                 {x, w, b}));
  }
  {
    Tensor x = random_tensor({1, 3, 5, 5, 5}, rng, true);
    Tensor w = random_tensor({2, 3, 1, 1, 1}, rng, true);
    Tensor b = random_tensor({2}, rng, true);
    check("conv3d k1 s2", gradcheck([&] { return sum_all(mul(conv3d(x, w, b, 2, 0),
                                                             conv3d(x, w, b, 2, 0))); },
                                    {x, w, b}));
  }
  {
    Tensor x = random_tensor({3, 4}, rng, true);
    Tensor w = random_tensor({5, 4}, rng, true);
    Tensor b = random_tensor({5}, rng, true);
    check("linear",
          gradcheck([&] { return sum_all(mul(linear(x, w, b), linear(x, w, b))); }, {x, w, b}));
  }
  for (bool training : {true, false}) {
    Tensor x = random_tensor({3, 2, 2, 2, 2}, rng, true);
    Tensor g = random_tensor({2}, rng, true);
    Tensor b = random_tensor({2}, rng, true);
    BatchNormBuffers buffers(2);
    buffers.running_mean = {0.1, -0.2};
    buffers.running_var = {1.1, 0.7};
    check(training ? "batch_norm train" : "batch_norm eval",
          gradcheck(
              [&] {
                Tensor y = batch_norm(x, g, b, buffers, training);
                return sum_all(mul(y, y));
              },
              {x, g, b}));
  }
  {
    Tensor x = random_tensor({2, 3, 2, 2, 2}, rng, true);
    Tensor g = random_tensor({3}, rng, true);
    Tensor b = random_tensor({3}, rng, true);
    check("layer_norm", gradcheck(
                            [&] {
                              Tensor y = layer_norm(x, g, b);
                              return sum_all(mul(y, y));
                            },
                            {x, g, b}));
  }
  for (Act kind : {Act::relu, Act::silu, Act::sigmoid}) {
    Tensor x = random_tensor({23}, rng, true);
    const char* name = kind == Act::relu ? "relu" : (kind == Act::silu ? "silu" : "sigmoid");
    check(name, gradcheck(
                    [&] { return sum_all(mul(activation(x, kind), activation(x, kind))); }, {x}));
  }
  {
    Tensor x = random_tensor({2, 3, 2, 2, 2}, rng, true);
    check("global_max_pool", gradcheck(
                                 [&] {
                                   Tensor y = global_max_pool(x);
                                   return sum_all(mul(y, y));
                                 },
                                 {x}));
  }
  {
    Tensor x = random_tensor({2, 3, 5}, rng, true);
    Tensor w = random_tensor({2, 3, 5}, rng);
    check("softmax", gradcheck([&] { return sum_all(mul(softmax(x, -1), w)); }, {x}));
  }
  {
    Tensor z = random_tensor({4, 20}, rng, true, 2.0);
    std::vector<int> labels = {3, 19, 0, 7};
    check("cross_entropy", gradcheck([&] { return cross_entropy(z, labels); }, {z}));
  }
  {
    Tensor x = random_tensor({2, 3, 2, 2, 2}, rng, true);
    Tensor gate = random_tensor({2, 3, 1, 1, 1}, rng, true);
    check("mul_gate", gradcheck(
                          [&] {
                            Tensor y = mul_gate(x, gate);
                            return sum_all(mul(y, y));
                          },
                          {x, gate}));
  }
  {
    Tensor a = random_tensor({2, 2, 3, 4}, rng, true);
    Tensor b = random_tensor({2, 2, 4, 3}, rng, true);
    check("bmm+transpose", gradcheck(
                               [&] {
                                 Tensor t = transpose_last2(bmm(a, b));
                                 return sum_all(mul(t, t));
                               },
                               {a, b}));
  }

  // network modules
  {
    Rng init(7);
    Cna cna({2, 3, 3, NormKind::batch, Act::silu, 1}, init);
    Tensor x = random_tensor({2, 2, 3, 3, 3}, rng, true);
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, std::vector<double>*>> buffers;
    cna.collect("cna", params, buffers);
    std::vector<Tensor> leaves = {x};
    for (auto& [n, t] : params) leaves.push_back(t);
    check("CNA", gradcheck(
                     [&] {
                       Tensor y = cna.forward(x, true);
                       return sum_all(mul(y, y));
                     },
                     leaves));
  }
  {
    Rng init(8);
    SeModule se(3, init);
    Tensor x = random_tensor({1, 3, 2, 2, 2}, rng, true);
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, std::vector<double>*>> buffers;
    se.collect("se", params, buffers);
    std::vector<Tensor> leaves = {x};
    for (auto& [n, t] : params) leaves.push_back(t);
    check("SE", gradcheck(
                    [&] {
                      Tensor y = se.forward(x, true);
                      return sum_all(mul(y, y));
                    },
                    leaves));
  }
  {
    Rng init(9);
    StemModule stem(2, 3, 4, init);
    Tensor x = random_tensor({2, 2, 3, 3, 3}, rng, true);
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, std::vector<double>*>> buffers;
    stem.collect("stem", params, buffers);
    std::vector<Tensor> leaves = {x};
    for (auto& [n, t] : params) leaves.push_back(t);
    check("Stem", gradcheck(
                      [&] {
                        Tensor y = stem.forward(x, true);
                        return sum_all(mul(y, y));
                      },
                      leaves));
  }
  {
    Rng init(10);
    IrmbModule irmb(2, init);
    Tensor x = random_tensor({2, 2, 3, 3, 3}, rng, true);
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, std::vector<double>*>> buffers;
    irmb.collect("irmb", params, buffers);
    std::vector<Tensor> leaves = {x};
    for (auto& [n, t] : params) leaves.push_back(t);
    check("iRMB", gradcheck(
                      [&] {
                        Tensor y = irmb.forward(x, true);
                        return sum_all(mul(y, y));
                      },
                      leaves));
  }
  {
    Rng init(11);
    DownsampleModule down(2, 2, 3, init);
    Tensor x = random_tensor({1, 2, 4, 4, 4}, rng, true);
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, std::vector<double>*>> buffers;
    down.collect("down", params, buffers);
    std::vector<Tensor> leaves = {x};
    for (auto& [n, t] : params) leaves.push_back(t);
    check("DownSample", gradcheck(
                            [&] {
                              Tensor y = down.forward(x, true);
                              return sum_all(mul(y, y));
                            },
                            leaves));
  }
  {
    Rng init(12);
    MhsaAttention attn(2, 1, init);
    Tensor x = random_tensor({1, 2, 2, 2, 1}, rng, true);
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, std::vector<double>*>> buffers;
    attn.collect("attn", params, buffers);
    std::vector<Tensor> leaves = {x};
    for (auto& [n, t] : params) leaves.push_back(t);
    check("MHSA", gradcheck(
                      [&] {
                        Tensor y = attn.forward(x, true);
                        return sum_all(mul(y, y));
                      },
                      leaves));
  }
  {
    Rng init(13);
    MhsaIrmbModule block(2, 2, 1, init);
    Tensor x = random_tensor({1, 2, 2, 2, 1}, rng, true);
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, std::vector<double>*>> buffers;
    block.collect("block", params, buffers);
    std::vector<Tensor> leaves = {x};
    for (auto& [n, t] : params) leaves.push_back(t);
    check("MHSA-iRMB", gradcheck(
                           [&] {
                             Tensor y = block.forward(x, true);
                             return sum_all(mul(y, y));
                           },
                           leaves));
  }
  {
    Rng init(14);
    MlpHead head(3, 4, 20, init);
    Tensor x = random_tensor({2, 3, 2, 2, 2}, rng, true);
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, std::vector<double>*>> buffers;
    head.collect("head", params, buffers);
    std::vector<Tensor> leaves = {x};
    for (auto& [n, t] : params) leaves.push_back(t);
    check("MLP head", gradcheck(
                          [&] {
                            Tensor y = head.forward(x, true);
                            return sum_all(mul(y, y));
                          },
                          leaves));
  }
  {
    ModelConfig tiny;
    tiny.stem_f1 = tiny.stem_f2 = tiny.stage1_f = 4;
    tiny.down1_f1 = tiny.down1_f2 = tiny.stage2_f = 4;
    tiny.down2_f1 = tiny.down2_f2 = tiny.stage3_f = 4;
    tiny.down3_f1 = tiny.down3_f2 = tiny.stage4_f = 4;
    tiny.stage1_blocks = tiny.stage2_blocks = tiny.stage3_blocks = tiny.stage4_blocks = 1;
    tiny.stage3_heads = tiny.stage4_heads = 2;
    tiny.mlp_hidden = 8;
    tiny.init_seed = 15;
    EmoModel model(tiny);
    Tensor x = random_tensor({2, 7, 6, 6, 6}, rng, true);
    std::vector<int> labels = {3, 17};
    std::vector<Tensor> leaves = {x};
    for (auto& [n, t] : model.named_parameters()) leaves.push_back(t);
    check("full model",
          gradcheck([&] { return cross_entropy(model.forward(x, true), labels); }, leaves));
  }

  double elapsed = seconds_since(start);
  std::ostringstream out;
  out << "max rel err " << worst << " (" << worst_name << "), " << elapsed << " s";
  detail = out.str();
  return worst <= 1e-4 && elapsed < 300.0;
}

// ---------------------------------------------------------------------------
// 2. Forward oracle suite
// ---------------------------------------------------------------------------

bool criterion_oracles(std::string& detail) {
  Rng rng(202);
  double worst = 0.0;
  int instances = 0;

  for (int trial = 0; trial < 100; ++trial) {
    // conv3d
    int64_t B = 1 + static_cast<int64_t>(rng.below(2));
    int64_t cin = 1 + static_cast<int64_t>(rng.below(3));
    int64_t d = 3 + static_cast<int64_t>(rng.below(4));
    int64_t cout = 1 + static_cast<int64_t>(rng.below(3));
    int64_t k = rng.below(2) ? 3 : 1;
    int64_t stride = rng.below(2) ? 2 : 1;
    int64_t pad = k == 3 ? static_cast<int64_t>(rng.below(2)) : 0;
    Tensor x = random_tensor({B, cin, d, d, d}, rng);
    Tensor w = random_tensor({cout, cin, k, k, k}, rng);
    Tensor bias = random_tensor({cout}, rng);
    Tensor y = conv3d(x, w, bias, static_cast<int>(stride), static_cast<int>(pad));
    int64_t od, oh, ow;
    std::vector<double> ref = oracles::conv3d_reference(
        x.data(), B, cin, d, d, d, w.data(), cout, k, bias.data(), stride, pad, od, oh, ow);
    for (size_t i = 0; i < ref.size(); ++i)
      worst = std::max(worst, std::fabs(y.data()[i] - ref[i]));

    // linear
    int64_t in_dim = 1 + static_cast<int64_t>(rng.below(10));
    int64_t out_dim = 1 + static_cast<int64_t>(rng.below(10));
    Tensor lx = random_tensor({B, in_dim}, rng);
    Tensor lw = random_tensor({out_dim, in_dim}, rng);
    Tensor lb = random_tensor({out_dim}, rng);
    std::vector<double> lref =
        oracles::linear_reference(lx.data(), B, in_dim, lw.data(), out_dim, lb.data());
    Tensor ly = linear(lx, lw, lb);
    for (size_t i = 0; i < lref.size(); ++i)
      worst = std::max(worst, std::fabs(ly.data()[i] - lref[i]));

    // global max pool
    Tensor px = random_tensor({B, cin, d, d, d}, rng);
    Tensor py = global_max_pool(px);
    std::vector<double> pref = oracles::global_max_pool_reference(px.data(), B, cin, d * d * d);
    for (size_t i = 0; i < pref.size(); ++i)
      worst = std::max(worst, std::fabs(py.data()[i] - pref[i]));

    // softmax
    int64_t klen = 2 + static_cast<int64_t>(rng.below(19));
    Tensor sx = random_tensor({1, klen}, rng, false, 5.0);
    Tensor sy = softmax(sx, -1);
    std::vector<double> sref = oracles::softmax_reference(sx.data());
    for (size_t i = 0; i < sref.size(); ++i)
      worst = std::max(worst, std::fabs(sy.data()[i] - sref[i]));

    // cross entropy
    Tensor cz = random_tensor({B, 20}, rng, false, 3.0);
    std::vector<int> labels;
    for (int64_t i = 0; i < B; ++i) labels.push_back(static_cast<int>(rng.below(20)));
    double cref = oracles::cross_entropy_reference(cz.data(), B, 20, labels);
    worst = std::max(worst, std::fabs(cross_entropy(cz, labels).item() - cref));

    ++instances;
  }

  std::ostringstream out;
  out << instances << " instances per op, max abs diff " << worst;
  detail = out.str();
  return worst <= 1e-10;
}

// ---------------------------------------------------------------------------
// 3. Voxelizer invariance
// ---------------------------------------------------------------------------

bool criterion_voxelizer(std::string& detail) {
  Rng rng(303);
  GridSpec spec;

  ResidueSite site;
  site.label = 4;
  site.chain_id = 'A';
  site.residue_seq = 1;
  site.ca = {0, 0, 0};
  site.n = {1.46, 0, 0};
  site.c = {-0.5, 1.4, 0};
  site.cbeta = geom::Vec3{-0.5, -0.7, 1.2};

  // 50 atoms at least 1e-3 from every cell boundary, with dyadic feature
  // values so channel sums are exact in any summation order.
  std::vector<Atom> atoms;
  FeatureMap features;
  for (int i = 0; i < 50; ++i) {
    double cx = static_cast<double>(static_cast<int>(rng.below(22))) - 11.0;
    double cy = static_cast<double>(static_cast<int>(rng.below(22))) - 11.0;
    double cz = static_cast<double>(static_cast<int>(rng.below(22))) - 11.0;
    double jx = (static_cast<double>(rng.below(800)) + 100.0) / 1024.0;
    double jy = (static_cast<double>(rng.below(800)) + 100.0) / 1024.0;
    double jz = (static_cast<double>(rng.below(800)) + 100.0) / 1024.0;
    Atom a;
    a.serial = i + 1;
    a.name = "C";
    a.element = "C";
    a.residue_name = "ALA";
    a.chain_id = 'A';
    a.residue_seq = 100 + i;
    a.position = *site.cbeta + geom::Vec3{cx + jx, cy + jy, cz + jz};
    atoms.push_back(a);
    AtomFeature f;
    f.onehot[rng.below(5)] = 1.0;
    f.fc = (static_cast<double>(rng.below(2048)) - 1024.0) / 1024.0;
    f.sasa = static_cast<double>(rng.below(8192)) / 1024.0;
    features.push_back(f);
  }

  MicroEnvGrid base = build_grid(site, features, atoms, "acc", spec);

  // exact channel-sum conservation against a direct oracle
  bool conserved = true;
  {
    LocalFrame frame = local_frame(site);
    for (int c = 0; c < 7; ++c) {
      double cell_sum = 0.0;
      for (int i = c * 8000; i < (c + 1) * 8000; ++i) cell_sum += base.values[static_cast<size_t>(i)];
      double atom_sum = 0.0;
      for (size_t i = 0; i < atoms.size(); ++i) {
        geom::Vec3 rel = atoms[i].position - frame.origin;
        double px = geom::dot(rel, frame.x), py = geom::dot(rel, frame.y),
               pz = geom::dot(rel, frame.z);
        if (px >= -10 && px < 10 && py >= -10 && py < 10 && pz >= -10 && pz < 10)
          atom_sum += features[i]->as_vector()[static_cast<size_t>(c)];
      }
      if (cell_sum != atom_sum) conserved = false;
    }
  }

  int identical = 0;
  for (int motion = 0; motion < 100; ++motion) {
    auto rot = oracles::random_rotation(rng);
    geom::Vec3 shift{rng.normal() * 30, rng.normal() * 30, rng.normal() * 30};
    ResidueSite moved = site;
    moved.n = rot.apply(site.n) + shift;
    moved.ca = rot.apply(site.ca) + shift;
    moved.c = rot.apply(site.c) + shift;
    moved.cbeta = rot.apply(*site.cbeta) + shift;
    std::vector<Atom> moved_atoms = atoms;
    for (Atom& a : moved_atoms) a.position = rot.apply(a.position) + shift;
    MicroEnvGrid grid = build_grid(moved, features, moved_atoms, "acc", spec);
    if (grid.values == base.values && grid.label == base.label) ++identical;
  }

  std::ostringstream out;
  out << identical << "/100 motions bitwise-identical, conservation "
      << (conserved ? "exact" : "VIOLATED");
  detail = out.str();
  return identical == 100 && conserved;
}

// ---------------------------------------------------------------------------
// 4. SASA
// ---------------------------------------------------------------------------

bool criterion_sasa(std::string& detail) {
  RadiiTable radii = RadiiTable::defaults();

  ProteinModel lone;
  lone.source_id = "lone";
  Atom c;
  c.serial = 1;
  c.name = "C";
  c.element = "C";
  c.residue_name = "ALA";
  c.chain_id = 'A';
  c.residue_seq = 1;
  lone.atoms.push_back(c);
  double measured = compute_sasa(lone, radii)[0];
  double analytic = 4.0 * geom::kPi * 3.1 * 3.1;
  double sphere_err = std::fabs(measured - analytic) / analytic;

  Rng rng(404);
  int monotone = 0;
  const int configs = 50;
  for (int trial = 0; trial < configs; ++trial) {
    ProteinModel model;
    model.source_id = "mono";
    int n = 4 + static_cast<int>(rng.below(10));
    for (int i = 0; i < n; ++i) {
      Atom a;
      a.serial = i + 1;
      a.name = i % 2 ? "N" : "C";
      a.element = i % 2 ? "N" : "C";
      a.residue_name = "ALA";
      a.chain_id = 'A';
      a.residue_seq = i + 1;
      a.position = {6.0 * rng.uniform(), 6.0 * rng.uniform(), 6.0 * rng.uniform()};
      model.atoms.push_back(a);
    }
    std::vector<double> before = compute_sasa(model, radii);
    Atom extra;
    extra.serial = n + 1;
    extra.name = "O";
    extra.element = "O";
    extra.residue_name = "ALA";
    extra.chain_id = 'A';
    extra.residue_seq = n + 1;
    extra.position = {6.0 * rng.uniform(), 6.0 * rng.uniform(), 6.0 * rng.uniform()};
    model.atoms.push_back(extra);
    std::vector<double> after = compute_sasa(model, radii);
    bool ok = true;
    for (int i = 0; i < n; ++i)
      if (after[static_cast<size_t>(i)] > before[static_cast<size_t>(i)] + 1e-12) ok = false;
    if (ok) ++monotone;
  }

  std::ostringstream out;
  out << "isolated sphere err " << sphere_err * 100 << "%, monotone " << monotone << "/"
      << configs;
  detail = out.str();
  return sphere_err < 0.02 && monotone == configs;
}

// ---------------------------------------------------------------------------
// 5. Metric oracles
// ---------------------------------------------------------------------------

bool criterion_metrics(std::string& detail) {
  Rng rng(505);
  bool exact = true;
  for (int trial = 0; trial < 50; ++trial) {
    size_t n = 50 + rng.below(950);
    std::vector<ProbabilityRow> probs;
    std::vector<int> labels, predicted;
    for (size_t i = 0; i < n; ++i) {
      ProbabilityRow row{};
      double sum = 0.0;
      for (double& v : row) {
        v = rng.uniform();
        sum += v;
      }
      for (double& v : row) v /= sum;
      probs.push_back(row);
      labels.push_back(static_cast<int>(rng.below(20)));
      predicted.push_back(argmax_class(row));
    }

    ConfusionMatrix confusion = confusion_from_predictions(probs, labels);
    auto per_class = per_class_metrics(confusion);
    for (int cls = 0; cls < 20; ++cls) {
      auto tally = oracles::tally_class_metrics(labels, predicted, cls);
      if (per_class[static_cast<size_t>(cls)].recall != tally.recall) exact = false;
      if (per_class[static_cast<size_t>(cls)].precision != tally.precision) exact = false;
      if (per_class[static_cast<size_t>(cls)].f1 != tally.f1) exact = false;
    }

    // top-k against a per-sample sort oracle
    for (int k : {1, 3, 20}) {
      int64_t hits = 0;
      for (size_t i = 0; i < n; ++i) {
        std::vector<int> order(20);
        for (int j = 0; j < 20; ++j) order[static_cast<size_t>(j)] = j;
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
          return probs[i][static_cast<size_t>(a)] > probs[i][static_cast<size_t>(b)];
        });
        for (int j = 0; j < k; ++j)
          if (order[static_cast<size_t>(j)] == labels[i]) {
            ++hits;
            break;
          }
      }
      double oracle = static_cast<double>(hits) / static_cast<double>(n);
      if (topk_accuracy(probs, labels, k) != oracle) exact = false;
    }

    if (topk_accuracy(probs, labels, 1) != accuracy(confusion)) exact = false;
    if (topk_accuracy(probs, labels, 20) != 1.0) exact = false;
  }
  detail = exact ? "50 random instances, tallies exact" : "oracle mismatch";
  return exact;
}

// ---------------------------------------------------------------------------
// 6. Published-statistics partition
// ---------------------------------------------------------------------------

bool criterion_partition(std::string& detail) {
  struct Stat {
    char letter;
    double r, p;
  };
  const std::vector<Stat> stats = {
      {'H', -0.03, 0.34},   {'K', -0.08, 0.02},   {'R', -0.06, 0.08},  {'D', 0.04, 0.26},
      {'E', -0.16, 2.5e-6}, {'S', -0.09, 8e-3},   {'T', 0.06, 0.07},   {'N', -0.16, 3.6e-6},
      {'Q', -0.33, 3.8e-24}, {'A', 0.32, 4.8e-22}, {'V', 0.17, 7.5e-7}, {'L', -3e-3, 0.93},
      {'I', -0.11, 1e-3},   {'M', -0.20, 3.4e-9}, {'F', 0.01, 0.76},   {'Y', -0.07, 0.03},
      {'W', 0.06, 0.08},    {'P', 0.20, 3.3e-9},  {'G', 0.34, 5.2e-25}, {'C', -0.20, 1.6e-9},
  };
  std::array<std::optional<double>, 20> r{}, p{};
  for (const Stat& s : stats) {
    int idx = aa::class_from_letter(s.letter);
    r[static_cast<size_t>(idx)] = s.r;
    p[static_cast<size_t>(idx)] = s.p;
  }
  auto partition = classify_amino_acids(r, p, 0.01);
  std::set<char> positive, negative;
  int neutral = 0;
  for (int k = 0; k < 20; ++k) {
    switch (partition[static_cast<size_t>(k)]) {
      case AminoAcidGroup::positive:
        positive.insert(aa::one_letter(k));
        break;
      case AminoAcidGroup::negative:
        negative.insert(aa::one_letter(k));
        break;
      default:
        ++neutral;
    }
  }
  bool ok = positive == std::set<char>{'A', 'V', 'P', 'G'} &&
            negative == std::set<char>{'E', 'S', 'N', 'Q', 'I', 'M', 'C'} && neutral == 9;
  std::ostringstream out;
  out << positive.size() << " positive, " << negative.size() << " negative, " << neutral
      << " neutral";
  detail = out.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 7. Overfit run on grids from a real structure file
// ---------------------------------------------------------------------------

bool criterion_overfit(std::string& detail) {
  auto start = std::chrono::steady_clock::now();

  ProteinModel model_in = parse_pdb_file(data_path("toy_helix.pdb"));
  ChargeTable charges = ChargeTable::load_file(std::string(EMOCPD_DATA_DIR) + "/charges.txt");
  RadiiTable radii = RadiiTable::load_file(std::string(EMOCPD_DATA_DIR) + "/radii.txt");
  FeatureMap features = featurize_model(model_in, charges, radii);

  std::vector<MicroEnvGrid> grids;
  for (const ResidueSite& site : model_in.sites) {
    grids.push_back(build_grid(site, features, model_in.atoms, model_in.source_id));
    if (grids.size() == 64) break;
  }
  if (grids.size() != 64) {
    detail = "fixture produced " + std::to_string(grids.size()) + " grids";
    return false;
  }

  EmoModel net(overfit_config());
  AdamConfig adam_cfg;
  adam_cfg.lr = 1e-3;
  adam_cfg.weight_decay = 0.0;
  AdamOptimizer optimizer(net.parameters(), adam_cfg);

  Rng rng(31);
  const int64_t batch_size = 32;  // half the set per step: smooth early descent
  std::vector<size_t> order(grids.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<size_t> all(grids.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  Tensor full_batch = make_batch(grids, all);
  std::vector<int> full_labels = batch_labels(grids, all);

  // Training-mode full-set loss: a deterministic function of the parameters,
  // comparable across steps (running stats are not read in training mode).
  auto full_loss = [&] {
    return cross_entropy(net.forward(full_batch, true), full_labels).item();
  };

  std::vector<double> first_losses;
  double reached_acc = 0.0;
  int reached_step = -1;
  int step = 0;
  bool strictly_decreasing = true;
  double last = full_loss();
  first_losses.push_back(last);

  while (step < 300) {
    rng.shuffle(order);
    for (size_t begin = 0; begin < order.size() && step < 300;
         begin += static_cast<size_t>(batch_size)) {
      size_t end = std::min(order.size(), begin + static_cast<size_t>(batch_size));
      std::vector<size_t> indices(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));
      Tensor logits = net.forward(make_batch(grids, indices), true);
      Tensor loss = cross_entropy(logits, batch_labels(grids, indices));
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      ++step;

      if (step <= 20) {
        double now = full_loss();
        first_losses.push_back(now);
        if (now >= last) strictly_decreasing = false;
        last = now;
      }
      if (step % 20 == 0 || step == 300) {
        double acc = evaluate_accuracy(net, grids, 32);
        if (acc >= 0.95) {
          reached_acc = acc;
          reached_step = step;
          break;
        }
        reached_acc = std::max(reached_acc, acc);
      }
    }
    if (reached_step > 0) break;
  }

  double elapsed = seconds_since(start);
  std::ostringstream out;
  out << "train acc " << reached_acc << (reached_step > 0 ? " at step " : " by step ")
      << (reached_step > 0 ? reached_step : step) << ", first-20-step loss "
      << (strictly_decreasing ? "strictly decreasing" : "NOT strictly decreasing") << " ("
      << first_losses.front() << " -> " << first_losses.back() << "), " << elapsed << " s";
  detail = out.str();
  return reached_step > 0 && reached_acc >= 0.95 && strictly_decreasing && elapsed < 900.0;
}

// ---------------------------------------------------------------------------
// 8. Shape trace
// ---------------------------------------------------------------------------

bool criterion_shape_trace(std::string& detail) {
  ModelConfig config;
  EmoModel model(config);
  Rng rng(808);
  Tensor x = random_tensor({2, 7, 20, 20, 20}, rng);
  std::vector<Shape> trace;
  Tensor logits = model.forward(x, false, &trace);
  bool ok = trace.size() == 5 && trace[0] == Shape{2, 16, 20, 20, 20} &&
            trace[1] == Shape{2, 32, 10, 10, 10} && trace[2] == Shape{2, 64, 5, 5, 5} &&
            trace[3] == Shape{2, 64, 3, 3, 3} && trace[4] == Shape{2, 20} &&
            logits.shape() == Shape{2, 20};
  std::ostringstream out;
  for (const Shape& s : trace) out << shape_str(s) << " ";
  detail = out.str();
  return ok;
}

// ---------------------------------------------------------------------------
// 9. Pipeline determinism through the CLI
// ---------------------------------------------------------------------------

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "<missing " + path + ">";
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

bool criterion_determinism(std::string& detail) {
  namespace fs = std::filesystem;
  const std::string cli = EMOCPD_CLI_PATH;

  // Identical commands with identical relative paths, in two fresh
  // directories; every artifact must come out byte-identical.
  auto pipeline = [&](const std::string& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const char* name : {"s1.pdb", "s2.pdb", "s3.pdb"})
      fs::copy_file(data_path("toy_helix.pdb"), dir + "/" + name);
    {
      std::ofstream cfg(dir + "/config.txt");
      cfg << "model.stem_f1 = 4\nmodel.stem_f2 = 4\n"
             "model.stage1_f = 4\nmodel.stage1_blocks = 1\n"
             "model.down1_f1 = 4\nmodel.down1_f2 = 4\n"
             "model.stage2_f = 4\nmodel.stage2_blocks = 1\n"
             "model.down2_f1 = 4\nmodel.down2_f2 = 4\n"
             "model.stage3_f = 4\nmodel.stage3_blocks = 1\nmodel.stage3_heads = 2\n"
             "model.down3_f1 = 4\nmodel.down3_f2 = 4\n"
             "model.stage4_f = 4\nmodel.stage4_blocks = 1\nmodel.stage4_heads = 2\n"
             "model.mlp_hidden = 8\n"
             "train.lr = 0.001\ntrain.weight_decay = 0.001\ntrain.batch_size = 16\n"
             "train.epochs = 5\ntrain.max_steps = 10\ntrain.val_every = 0\ntrain.seed = 77\n";
    }
    auto run = [&](const std::string& args) {
      std::string cmd = "cd " + dir + " && " + cli + " " + args + " >/dev/null 2>&1";
      int status = std::system(cmd.c_str());
      return WIFEXITED(status) && WEXITSTATUS(status) == 0;
    };
    bool ok = true;
    ok = ok && run("voxelize s1.pdb s2.pdb s3.pdb -o data.emog --seed 77");
    ok = ok && run("train --data data.emog --val data.emog -c config.txt -o model.emoc"
                   " --history history.csv");
    ok = ok && run("predict --checkpoint model.emoc --data data.emog -o pred.csv");
    ok = ok && run("evaluate --checkpoint model.emoc --data data.emog -o metrics.json"
                   " --confusion confusion.csv");
    ok = ok && run("analyze --predictions pred.csv -o report.json --scatter scatter.csv"
                   " --histogram hist.csv");
    return ok;
  };

  if (!pipeline("acc9_a") || !pipeline("acc9_b")) {
    detail = "pipeline run failed";
    return false;
  }

  std::string mismatches;
  for (const char* name : {"data.emog", "data.emog.meta.json", "model.emoc", "history.csv",
                           "pred.csv", "metrics.json", "confusion.csv", "report.json",
                           "scatter.csv", "hist.csv"})
    if (slurp(std::string("acc9_a/") + name) != slurp(std::string("acc9_b/") + name))
      mismatches += std::string(name) + " ";
  detail = mismatches.empty() ? "all 10 artifacts byte-identical" : "mismatch: " + mismatches;
  return mismatches.empty();
}

// ---------------------------------------------------------------------------
// 10. F1 harmonic-mean identity
// ---------------------------------------------------------------------------

bool criterion_f1_identity(std::string& detail) {
  Rng rng(1010);
  double worst = 0.0;
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    ConfusionMatrix m;
    for (int r = 0; r < 20; ++r)
      for (int c = 0; c < 20; ++c)
        m.counts[static_cast<size_t>(r)][static_cast<size_t>(c)] =
            static_cast<int64_t>(rng.below(8));
    auto per_class = per_class_metrics(m);
    for (int c = 0; c < 20; ++c) {
      double p = per_class[static_cast<size_t>(c)].precision;
      double r = per_class[static_cast<size_t>(c)].recall;
      if (p + r > 0) {
        worst = std::max(worst,
                         std::fabs(per_class[static_cast<size_t>(c)].f1 - 2.0 * p * r / (p + r)));
        ++checked;
      }
    }
  }
  std::ostringstream out;
  out << checked << " classes checked, max deviation " << worst;
  detail = out.str();
  return worst <= 1e-12;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::string&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient suite (operators + modules, h=1e-4, <5 min)", criterion_gradients},
      {2, "forward oracle suite (<=1e-10, 100 instances per op)", criterion_oracles},
      {3, "voxelizer rigid-motion invariance + exact conservation", criterion_voxelizer},
      {4, "SASA analytic sphere (2%) + monotonicity (50 configs)", criterion_sasa},
      {5, "metric tallies exact, topk(1)=acc, topk(20)=1", criterion_metrics},
      {6, "published-statistics partition {A,V,P,G} / 7 negative", criterion_partition},
      {7, "overfit: 64 real-structure grids, >=95% in 300 steps", criterion_overfit},
      {8, "shape trace 20/10/5/3 -> [B,20]", criterion_shape_trace},
      {9, "pipeline determinism: byte-identical artifacts", criterion_determinism},
      {10, "F1 equals 2PR/(P+R) on random confusion matrices", criterion_f1_identity},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::printf("[%s] %2d. %s — %s\n", ok ? "PASS" : "FAIL", c.id, c.name, detail.c_str());
    std::fflush(stdout);
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
