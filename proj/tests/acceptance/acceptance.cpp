// Acceptance suite: one PASS/FAIL line per criterion. Thresholds and run sizes
// are fixed below; the process exits 0 whenever every check ran to completion.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "child/eval.hpp"
#include "child/hungarian.hpp"
#include "child/run_config.hpp"
#include "child/spectral.hpp"
#include "child/training.hpp"

using namespace child;
namespace fs = std::filesystem;

namespace {

// ---- pinned settings ----
constexpr std::uint64_t kRootSeed = 2025;
constexpr int kDeskSequences = 20000;
constexpr int kDeskEpochs = 40;
constexpr int kEvalSequences = 2000;
constexpr double kMccThresholdA = 0.80;
constexpr double kContextGap = 0.03;
constexpr double kMccThresholdB = 0.90;
constexpr int kSpectralInstances = 50;
constexpr double kSpectralTolerance = 1e-8;
constexpr double kSpectralBudgetSeconds = 120.0;
constexpr double kMccIdentityTolerance = 1e-6;
constexpr int kAssignmentTrials = 100;
constexpr double kDensityTolerance = 1e-3;
constexpr int kDensityPoints = 20;
constexpr double kTriangularTolerance = 1e-8;
constexpr int kJacobianPoints = 100;
constexpr double kGradientTolerance = 1e-3;
constexpr int kGradientSlice = 10;
constexpr double kScoreTolerance = 1e-6;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void note(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

// ---- desk-scale training (criteria 1-4) ----

struct DeskRun {
  double mcc = 0.0;
  std::vector<double> per_layer;
  int epochs = 0;
  double seconds = 0.0;
  bool diverged = false;
};

DeskRun desk_run(const RunConfig& rc, const GroundTruthSeries& train_data, const GroundTruthSeries& test_data,
                 Variant variant) {
  TrainConfig tc = rc.train;
  tc.epochs = kDeskEpochs;
  tc.variant = variant;
  const auto t0 = std::chrono::steady_clock::now();
  TrainOptions opts;
  opts.on_epoch = [&](const EpochMetrics& m) {
    note(to_string(variant) + " epoch " + std::to_string(m.epoch) + " val_loss " + fmt(m.val_loss) + " val_mcc " +
         fmt(m.val_mcc.value_or(0.0)));
  };
  const TrainResult r = train(train_data, rc.model, tc, opts);
  DeskRun out;
  out.diverged = r.diverged;
  out.epochs = r.state.epochs_done;
  out.seconds = seconds_since(t0);
  const LatentStack lat =
      r.state.model->encode_context(test_data.observation_rows(0, test_data.num_sequences()), test_data.seq_length());
  const EvalReport rep = compute_mcc_per_layer(test_data, lat);
  out.mcc = rep.mcc_overall;
  out.per_layer = rep.mcc_per_layer;
  return out;
}

std::string describe(const DeskRun& r) {
  std::string s = "MCC " + fmt(r.mcc) + " (per layer";
  for (double v : r.per_layer) s += " " + fmt(v);
  s += "), " + std::to_string(r.epochs) + " epochs, " + fmt(r.seconds / 60.0, 3) + " min";
  if (r.diverged) s += ", diverged";
  return s;
}

struct DeskData {
  RunConfig rc;
  GroundTruthSeries train;
  GroundTruthSeries test;
};

DeskData desk_data(const std::string& preset) {
  DeskData d;
  d.rc = RunConfig::preset(preset, kRootSeed);
  d.rc.data.num_sequences = kDeskSequences;
  const HierarchicalProcess process = build_process(d.rc.process);
  d.train = sample_series(process, kDeskSequences, d.rc.seq_length(), d.rc.sample_seed());
  d.test = sample_series(process, kEvalSequences, d.rc.seq_length(), d.rc.eval_seed());
  return d;
}

// ---- criterion 5 ----

Outcome spectral_check() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(derive_seed(kRootSeed, "spectral"));
  double worst = 0.0, worst_hausdorff = 0.0;
  int accepted = 0, rejected = 0, flips = 0;
  // Draws that fail the injectivity diagnostic at the minimal window violate the
  // identification assumption and are redrawn; the count is reported.
  while (accepted < kSpectralInstances) {
    const spectral::DiscreteHierChain c = spectral::random_chain({2, 2}, 8, rng);
    const spectral::OperatorBundle b = spectral::build_operators(c, 2);
    if (!b.rank_ok) {
      ++rejected;
      continue;
    }
    ++accepted;
    const spectral::RecoveryComparison cmp = spectral::compare_emissions(spectral::recover_emissions(b), c);
    worst = std::max(worst, cmp.max_error);
    worst_hausdorff = std::max(worst_hausdorff, cmp.hausdorff);
    if (!spectral::build_operators(c, 1).rank_ok) ++flips;
  }
  const spectral::Sweep preset = spectral::minimal_window_sweep(spectral::preset_chain("two-layer-min-window"), {1, 2, 3});
  const bool preset_flip = !preset.rows[0].rank_ok && preset.rows[1].rank_ok && preset.rows[2].rank_ok;
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = worst <= kSpectralTolerance && worst_hausdorff <= kSpectralTolerance && flips == kSpectralInstances &&
           preset_flip && elapsed <= kSpectralBudgetSeconds;
  o.detail = std::to_string(accepted) + " instances (" + std::to_string(rejected) +
             " draws rejected by the W=2 injectivity diagnostic), max error " + fmt(worst, 3) + ", Hausdorff " +
             fmt(worst_hausdorff, 3) + " (tol " + fmt(kSpectralTolerance) + "), rank_ok false at W=1 on " +
             std::to_string(flips) + "/" + std::to_string(accepted) + ", preset sweep flips at W=2: " +
             (preset_flip ? "yes" : "no") + ", " + fmt(elapsed, 3) + " s";
  return o;
}

// ---- criterion 6 ----

Outcome mcc_oracle_check() {
  std::mt19937_64 rng(derive_seed(kRootSeed, "mcc"));
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.1, 5.0), off(-3.0, 3.0), w01(0.0, 1.0);
  double worst_identity = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + trial % 7;
    Mat z(1000, d);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n(rng);
    std::vector<int> perm(static_cast<std::size_t>(d));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Mat est(1000, d);
    for (int j = 0; j < d; ++j) est.col(j) = u(rng) * z.col(perm[static_cast<std::size_t>(j)]).array() + off(rng);
    worst_identity = std::max(worst_identity, std::abs(compute_mcc(z, est).mcc - 1.0));
  }
  int matches = 0;
  for (int trial = 0; trial < kAssignmentTrials; ++trial) {
    const int d = 1 + trial % 6;
    Mat w(d, d);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = w01(rng);
    std::vector<int> p(static_cast<std::size_t>(d));
    std::iota(p.begin(), p.end(), 0);
    double best = -1e300;
    do {
      double v = 0;
      for (int r = 0; r < d; ++r) v += w(r, p[static_cast<std::size_t>(r)]);
      best = std::max(best, v);
    } while (std::next_permutation(p.begin(), p.end()));
    if (std::abs(assignment_value(w, max_weight_assignment(w)) - best) <= 1e-12) ++matches;
  }
  Outcome o;
  o.pass = worst_identity <= kMccIdentityTolerance && matches == kAssignmentTrials;
  o.detail = "max |MCC - 1| " + fmt(worst_identity, 3) + " (tol " + fmt(kMccIdentityTolerance) + "), assignment optimal on " +
             std::to_string(matches) + "/" + std::to_string(kAssignmentTrials);
  return o;
}

// ---- criterion 7 ----

/// Random prior weights on the scale of the initialization (std 0.3 / sqrt(fan-in)).
void perturb(ChildModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (ad::Parameter* p : model.parameters().all()) {
    if (p->name.rfind("prior.", 0) != 0) continue;
    const double scale = 0.3 / std::sqrt(static_cast<double>(p->value.rows()));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += scale * n(rng);
  }
}

Outcome flow_prior_check() {
  const RunConfig rc = RunConfig::preset("A", kRootSeed);
  ChildModel model(rc.model, derive_seed(kRootSeed, "flow-model"));
  perturb(model, derive_seed(kRootSeed, "flow-perturb"));
  std::mt19937_64 rng(derive_seed(kRootSeed, "flow"));
  std::normal_distribution<double> n(0.0, 1.0);
  const int n1 = rc.model.layer_dim(1), n2 = rc.model.layer_dim(2);

  double worst_mass = 0.0;
  for (int p = 0; p < kDensityPoints; ++p) {
    std::vector<Vec> delayed{Vec(n1)};
    for (int i = 0; i < n1; ++i) delayed[0](i) = n(rng);
    Vec parent(n2);
    for (int i = 0; i < n2; ++i) parent(i) = n(rng);
    const int comp = p % n1;
    const FlowCoefficients c = model.flow_coefficients(1, comp, delayed, &parent);
    // Trapezoid rule on [-8, 8] with 4001 points.
    const int steps = 4000;
    const double lo = -8.0, hi = 8.0, h = (hi - lo) / steps;
    double mass = 0.0;
    for (int k = 0; k <= steps; ++k) {
      const double z = lo + k * h;
      const double e = c.forward(z);
      const double f = std::exp(-0.5 * e * e) / std::sqrt(2.0 * M_PI) * c.derivative(z);
      mass += (k == 0 || k == steps) ? 0.5 * f : f;
    }
    worst_mass = std::max(worst_mass, std::abs(mass * h - 1.0));
  }

  // Stacked Jacobian d eps_t / d z_t ordered top layer first: lower triangular.
  double worst_upper = 0.0;
  const int D = n1 + n2;
  const double fd = 1e-6;
  auto stacked_noise = [&](const Vec& zt, const Mat& d1, const Mat& d2) {
    const Mat top = zt.head(n2).transpose();
    const Mat bottom = zt.tail(n1).transpose();
    Vec e(D);
    e.head(n2) = model.prior_noise_and_jacobian(2, top, {d2}, nullptr).noise.row(0).transpose();
    e.tail(n1) = model.prior_noise_and_jacobian(1, bottom, {d1}, &top).noise.row(0).transpose();
    return e;
  };
  for (int p = 0; p < kJacobianPoints; ++p) {
    Vec zt(D);
    for (int i = 0; i < D; ++i) zt(i) = n(rng);
    Mat d1(1, n1), d2(1, n2);
    for (int i = 0; i < n1; ++i) d1(0, i) = n(rng);
    for (int i = 0; i < n2; ++i) d2(0, i) = n(rng);
    for (int j = 0; j < D; ++j) {
      Vec up = zt, dn = zt;
      up(j) += fd;
      dn(j) -= fd;
      const Vec col = (stacked_noise(up, d1, d2) - stacked_noise(dn, d1, d2)) / (2 * fd);
      for (int i = 0; i < j; ++i) worst_upper = std::max(worst_upper, std::abs(col(i)));
    }
  }
  Outcome o;
  o.pass = worst_mass <= kDensityTolerance && worst_upper <= kTriangularTolerance;
  o.detail = "max |mass - 1| " + fmt(worst_mass, 3) + " over " + std::to_string(kDensityPoints) +
             " conditioning points (tol " + fmt(kDensityTolerance) + "), max upper-triangular |J| " +
             fmt(worst_upper, 3) + " over " + std::to_string(kJacobianPoints) + " points (tol " +
             fmt(kTriangularTolerance) + ")";
  return o;
}

// ---- criterion 8 ----

Outcome gradient_check() {
  const RunConfig rc = RunConfig::preset("A", kRootSeed);
  const GroundTruthSeries data = sample_series(build_process(rc.process), 8, rc.seq_length(), rc.sample_seed());
  ChildModel model(rc.model, derive_seed(kRootSeed, "grad-model"));
  model.normalization = Normalization::fit(data.observation_rows(0, 8));
  const Mat x = data.observation_rows(0, 8);
  const Mat xn = model.normalization.apply(x);
  std::mt19937_64 rng(derive_seed(kRootSeed, "grad"));
  const auto noise = draw_posterior_noise(rc.model, x.rows(), rng);
  const double w = reconstruction_weight(rc.model, rc.train);

  ad::Tape tape;
  const ElboGraph g = build_elbo(tape, model, xn, data.seq_length(), noise, w, 1.0);
  model.parameters().zero_grad();
  tape.backward(g.loss);

  auto params = model.parameters().all();
  std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
  double worst = 0.0;
  const double h = 1e-6;
  for (int k = 0; k < kGradientSlice; ++k) {
    ad::Parameter* p = params[pick_param(rng)];
    std::uniform_int_distribution<Eigen::Index> pick_entry(0, p->value.size() - 1);
    const Eigen::Index idx = pick_entry(rng);
    const double analytic = p->grad.data()[idx];
    const double orig = p->value.data()[idx];
    p->value.data()[idx] = orig + h;
    const double up = elbo_terms(model, x, data.seq_length(), noise, rc.train).loss;
    p->value.data()[idx] = orig - h;
    const double dn = elbo_terms(model, x, data.seq_length(), noise, rc.train).loss;
    p->value.data()[idx] = orig;
    const double numeric = (up - dn) / (2 * h);
    worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3}));
  }
  Outcome o;
  o.pass = worst <= kGradientTolerance;
  o.detail = "max relative error " + fmt(worst, 3) + " over " + std::to_string(kGradientSlice) + " parameters (tol " +
             fmt(kGradientTolerance) + ")";
  return o;
}

// ---- criterion 9 ----

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + CHILD_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// metrics.jsonl without the wall-clock field.
std::string metrics_without_time(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::string line, out;
  while (std::getline(in, line)) {
    nlohmann::json j = nlohmann::json::parse(line);
    j.erase("wall_time_s");
    out += j.dump() + "\n";
  }
  return out;
}

Outcome determinism_check() {
  const fs::path dir = fs::path(CHILD_TEST_TMP) / "determinism";
  fs::remove_all(dir);
  const std::string args = " --preset A --seed 7 --num-sequences 200";
  bool ok = true;
  for (const char* run : {"a", "b"}) {
    ok = ok && run_cli("generate" + args + " --out " + (dir / run / "data").string()) == 0;
    ok = ok && run_cli("train" + args + " --epochs 2 --data " + (dir / run / "data" / "dataset.bin").string() +
                       " --out " + (dir / run / "train").string()) == 0;
  }
  if (!ok) return {false, "a command-line run failed"};
  const bool data_same = read_file(dir / "a" / "data" / "dataset.bin") == read_file(dir / "b" / "data" / "dataset.bin");
  const std::string ma = metrics_without_time(dir / "a" / "train" / "metrics.jsonl");
  const bool metrics_same = !ma.empty() && ma == metrics_without_time(dir / "b" / "train" / "metrics.jsonl");
  Outcome o;
  o.pass = data_same && metrics_same;
  o.detail = std::string("dataset files ") + (data_same ? "bit-identical" : "differ") + ", metric logs " +
             (metrics_same ? "identical" : "differ") + " (wall_time_s excluded)";
  return o;
}

// ---- criterion 10 ----

Outcome score_check() {
  std::mt19937_64 rng(derive_seed(kRootSeed, "score"));
  std::normal_distribution<double> n(0.0, 1.0);
  Mat x(5000, 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = n(rng);
    x(i, 1) = 0.6 * x(i, 0) + 0.8 * n(rng);
  }
  const double self = correlational_score(x, x);
  Mat flipped = x;
  flipped.col(1) = -flipped.col(1);
  const double c = feature_correlation(x)(0, 1);
  const double err = std::abs(correlational_score(x, flipped) - 4.0 * std::abs(c));
  Outcome o;
  o.pass = self == 0.0 && err <= kScoreTolerance;
  o.detail = "score(X, X) = " + fmt(self) + ", sign-flip error " + fmt(err, 3) + " (tol " + fmt(kScoreTolerance) + ")";
  return o;
}

}  // namespace

int main() {
  std::map<int, Outcome> results;
  auto record = [&results](int k, Outcome o) {
    note("criterion " + std::to_string(k) + (o.pass ? " PASS: " : " FAIL: ") + o.detail);
    results[k] = std::move(o);
  };
  try {
    fs::create_directories(CHILD_TEST_TMP);
    record(5, spectral_check());
    record(6, mcc_oracle_check());
    record(7, flow_prior_check());
    record(8, gradient_check());
    record(9, determinism_check());
    record(10, score_check());

    note("criterion 4: dataset B");
    {
      const DeskData b = desk_data("B");
      const DeskRun full = desk_run(b.rc, b.train, b.test, Variant::Full);
      record(4, {full.mcc >= kMccThresholdB, describe(full) + " (threshold " + fmt(kMccThresholdB) + ")"});
    }

    note("criteria 1-3: dataset A");
    {
      const DeskData a = desk_data("A");
      const DeskRun full = desk_run(a.rc, a.train, a.test, Variant::Full);
      record(1, {full.mcc >= kMccThresholdA, describe(full) + " (threshold " + fmt(kMccThresholdA) + ")"});
      const DeskRun no_context = desk_run(a.rc, a.train, a.test, Variant::NoContext);
      record(2, {full.mcc - no_context.mcc >= kContextGap,
                    "FULL " + fmt(full.mcc) + " vs NO_CONTEXT " + fmt(no_context.mcc) + ", gap " +
                        fmt(full.mcc - no_context.mcc) + " (required " + fmt(kContextGap) + ")"});
      const DeskRun no_kl = desk_run(a.rc, a.train, a.test, Variant::NoKl);
      record(3, {full.mcc > no_kl.mcc, "FULL " + fmt(full.mcc) + " vs NO_KL " + fmt(no_kl.mcc)});
    }
  } catch (const std::exception& e) {
    std::cerr << "acceptance aborted: " << e.what() << std::endl;
    for (const auto& [k, o] : results) std::cout << "criterion " << k << ": " << (o.pass ? "PASS" : "FAIL") << ": " << o.detail << "\n";
    return 1;
  }
  int passed = 0;
  for (const auto& [k, o] : results) {
    std::cout << "criterion " << k << ": " << (o.pass ? "PASS" : "FAIL") << ": " << o.detail << "\n";
    passed += o.pass ? 1 : 0;
  }
  std::cout << passed << "/" << results.size() << " criteria passed\n";
  return 0;
}
