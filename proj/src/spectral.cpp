#include "child/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "child/hungarian.hpp"

namespace child::spectral {

namespace {

constexpr double kProbabilityTolerance = 1e-12;
constexpr double kClusterTolerance = 1e-7;
constexpr double kScalarBlockTolerance = 1e-6;

long long ipow(long long base, int e) {
  long long r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

Vec dirichlet_ones(int n, std::mt19937_64& rng) {
  std::exponential_distribution<double> expo(1.0);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = expo(rng);
  return v / v.sum();
}

Mat stochastic(int rows, int cols, std::mt19937_64& rng) {
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) m.row(r) = dirichlet_ones(cols, rng).transpose();
  return m;
}

void check_rows(const Mat& m, const std::string& what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if ((m.row(r).array() < 0.0).any() || !m.row(r).allFinite()) {
      throw ConfigError(what + " row " + std::to_string(r) + " has a negative or non-finite entry");
    }
    if (std::abs(m.row(r).sum() - 1.0) > kProbabilityTolerance) {
      throw ConfigError(what + " row " + std::to_string(r) + " does not sum to 1");
    }
  }
}

nlohmann::json matrix_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    rows.push_back(std::vector<double>(m.row(r).data(), m.row(r).data() + m.cols()));
  }
  return rows;
}

Mat matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return Mat();
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw ConfigError("ragged probability table");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

/// Stationary distribution of a row-stochastic matrix.
Vec stationary(const Mat& T) {
  const Eigen::Index K = T.rows();
  Eigen::MatrixXd A = Eigen::MatrixXd(T.transpose()) - Eigen::MatrixXd::Identity(K, K);
  A.row(K - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(K);
  b(K - 1) = 1.0;
  Vec pi = A.fullPivLu().solve(b);
  pi = pi.cwiseMax(0.0);
  return pi / pi.sum();
}

double min_row_gap(const Mat& e) {
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < e.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < e.rows(); ++b) gap = std::min(gap, (e.row(a) - e.row(b)).cwiseAbs().sum());
  }
  return gap;
}

Eigen::VectorXd singular_values(const Mat& m) {
  if (m.rows() <= 128 && m.cols() <= 128) return Eigen::JacobiSVD<Eigen::MatrixXd>(Eigen::MatrixXd(m)).singularValues();
  return Eigen::BDCSVD<Eigen::MatrixXd>(Eigen::MatrixXd(m)).singularValues();
}

}  // namespace

// ---------------------------------------------------------------------------
// DiscreteHierChain

int DiscreteHierChain::joint_size() const {
  int k = 1;
  for (int s : sizes) k *= s;
  return k;
}

std::vector<int> DiscreteHierChain::decode_state(int s) const {
  std::vector<int> out;
  for (int l = 1; l <= num_layers(); ++l) {
    out.push_back(s % layer_size(l));
    s /= layer_size(l);
  }
  return out;
}

int DiscreteHierChain::encode_state(const std::vector<int>& bottom_first) const {
  int s = 0;
  for (int l = num_layers(); l >= 1; --l) s = s * layer_size(l) + bottom_first[static_cast<std::size_t>(l - 1)];
  return s;
}

Mat DiscreteHierChain::joint_transition() const {
  const int K = joint_size();
  const int L = num_layers();
  Mat T(K, K);
  for (int a = 0; a < K; ++a) {
    const auto prev = decode_state(a);
    for (int b = 0; b < K; ++b) {
      const auto next = decode_state(b);
      double p = top_transition(prev[static_cast<std::size_t>(L - 1)], next[static_cast<std::size_t>(L - 1)]);
      for (int l = 1; l < L; ++l) {
        const auto i = static_cast<std::size_t>(l - 1);
        p *= conditional[i][static_cast<std::size_t>(next[i + 1])](prev[i], next[i]);
      }
      T(a, b) = p;
    }
  }
  return T;
}

Mat DiscreteHierChain::joint_emission() const {
  const int K = joint_size();
  Mat E(K, alphabet);
  for (int s = 0; s < K; ++s) E.row(s) = emission.row(decode_state(s)[0]);
  return E;
}

void DiscreteHierChain::validate() const {
  const int L = num_layers();
  if (L < 1) throw ConfigError("chain needs at least one layer");
  for (int k : sizes) {
    if (k < 1) throw ConfigError("chain layer sizes must be >= 1");
  }
  if (alphabet < 1) throw ConfigError("chain alphabet must be >= 1");
  const int kL = layer_size(L);
  if (top_transition.rows() != kL || top_transition.cols() != kL) throw ConfigError("top_transition must be [k_L, k_L]");
  check_rows(top_transition, "top_transition");
  if (static_cast<int>(conditional.size()) != L - 1) throw ConfigError("conditional needs one entry per lower layer");
  for (int l = 1; l < L; ++l) {
    const auto& slices = conditional[static_cast<std::size_t>(l - 1)];
    if (static_cast<int>(slices.size()) != layer_size(l + 1)) {
      throw ConfigError("conditional of layer " + std::to_string(l) + " needs one slice per parent state");
    }
    for (std::size_t p = 0; p < slices.size(); ++p) {
      if (slices[p].rows() != layer_size(l) || slices[p].cols() != layer_size(l)) {
        throw ConfigError("conditional slices of layer " + std::to_string(l) + " must be [k_l, k_l]");
      }
      check_rows(slices[p], "conditional[" + std::to_string(l) + "][" + std::to_string(p) + "]");
    }
  }
  if (emission.rows() != layer_size(1) || emission.cols() != alphabet) throw ConfigError("emission must be [k_1, m]");
  check_rows(emission, "emission");
  if (initial.size() != joint_size()) throw ConfigError("initial must have one entry per joint state");
  check_rows(Mat(initial.transpose()), "initial");
}

nlohmann::json DiscreteHierChain::to_json() const {
  nlohmann::json cond = nlohmann::json::array();
  for (const auto& layer : conditional) {
    nlohmann::json slices = nlohmann::json::array();
    for (const Mat& m : layer) slices.push_back(matrix_json(m));
    cond.push_back(slices);
  }
  return {{"sizes", sizes},
          {"alphabet", alphabet},
          {"top_transition", matrix_json(top_transition)},
          {"conditional", cond},
          {"emission", matrix_json(emission)},
          {"initial", std::vector<double>(initial.data(), initial.data() + initial.size())}};
}

DiscreteHierChain DiscreteHierChain::from_json(const nlohmann::json& j) {
  DiscreteHierChain c;
  try {
    c.sizes = j.at("sizes").get<std::vector<int>>();
    c.alphabet = j.at("alphabet").get<int>();
    c.top_transition = matrix_from_json(j.at("top_transition"));
    for (const auto& layer : j.at("conditional")) {
      std::vector<Mat> slices;
      for (const auto& m : layer) slices.push_back(matrix_from_json(m));
      c.conditional.push_back(std::move(slices));
    }
    c.emission = matrix_from_json(j.at("emission"));
    const auto init = j.at("initial").get<std::vector<double>>();
    c.initial = Eigen::Map<const Vec>(init.data(), static_cast<Eigen::Index>(init.size()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid chain description: ") + e.what());
  }
  c.validate();
  return c;
}

DiscreteHierChain random_chain(const std::vector<int>& sizes, int alphabet, std::mt19937_64& rng,
                               double min_emission_gap) {
  DiscreteHierChain c;
  c.sizes = sizes;
  c.alphabet = alphabet;
  const int L = c.num_layers();
  if (L < 1) throw ConfigError("chain needs at least one layer");
  c.top_transition = stochastic(c.layer_size(L), c.layer_size(L), rng);
  for (int l = 1; l < L; ++l) {
    std::vector<Mat> slices;
    for (int p = 0; p < c.layer_size(l + 1); ++p) slices.push_back(stochastic(c.layer_size(l), c.layer_size(l), rng));
    c.conditional.push_back(std::move(slices));
  }
  for (int attempt = 0;; ++attempt) {
    c.emission = stochastic(c.layer_size(1), alphabet, rng);
    if (c.layer_size(1) < 2 || min_row_gap(c.emission) >= min_emission_gap) break;
    if (attempt > 10000) throw ConfigError("could not draw distinguishable emission rows; lower min_emission_gap");
  }
  c.initial = stationary(c.joint_transition());
  return c;
}

std::vector<std::string> preset_chain_names() { return {"two-layer-min-window", "one-layer", "small-alphabet"}; }

DiscreteHierChain preset_chain(const std::string& name) {
  if (name == "two-layer-min-window") {
    std::mt19937_64 rng(derive_seed(2024, name));
    return random_chain({2, 2}, 8, rng);
  }
  if (name == "one-layer") {
    std::mt19937_64 rng(derive_seed(2024, name));
    return random_chain({3}, 4, rng);
  }
  if (name == "small-alphabet") {
    std::mt19937_64 rng(derive_seed(2024, name));
    return random_chain({3, 3}, 2, rng);
  }
  throw ConfigError("unknown spectral preset '" + name +
                    "'; valid presets: two-layer-min-window, one-layer, small-alphabet");
}

// ---------------------------------------------------------------------------
// Enumeration

double WindowJoint::at(const std::vector<int>& symbols) const {
  if (static_cast<int>(symbols.size()) != length()) throw std::invalid_argument("WindowJoint::at: wrong window length");
  std::size_t idx = 0;
  for (int s : symbols) idx = idx * static_cast<std::size_t>(alphabet) + static_cast<std::size_t>(s);
  return prob[idx];
}

WindowJoint WindowJoint::marginalize_outer() const {
  if (half_window < 1) throw std::invalid_argument("marginalize_outer needs W >= 1");
  WindowJoint out;
  out.half_window = half_window - 1;
  out.alphabet = alphabet;
  const auto m = static_cast<std::size_t>(alphabet);
  const auto inner = static_cast<std::size_t>(ipow(alphabet, out.length()));
  out.prob.assign(inner, 0.0);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t i = 0; i < inner; ++i) {
      for (std::size_t b = 0; b < m; ++b) out.prob[i] += prob[(a * inner + i) * m + b];
    }
  }
  return out;
}

WindowJoint enumerate_joint(const DiscreteHierChain& chain, int half_window) {
  chain.validate();
  if (half_window < 0) throw ConfigError("half window must be >= 0");
  const int K = chain.joint_size();
  const int m = chain.alphabet;
  const int n = 2 * half_window + 1;
  const double configurations = std::pow(static_cast<double>(m), n) * K;
  if (configurations > kMaxJointConfigurations) {
    throw ConfigError("state-space overflow: m^(2W+1) * K = " + std::to_string(static_cast<long long>(configurations)) +
                      " exceeds the enumeration limit of 1e7");
  }
  const Mat T = chain.joint_transition();
  const Mat E = chain.joint_emission();
  // alpha(prefix, Z) = P(x_0..x_t = prefix, Z_t = Z)
  Mat alpha(m, K);
  for (int x = 0; x < m; ++x) alpha.row(x) = chain.initial.transpose().cwiseProduct(E.col(x).transpose());
  for (int t = 1; t < n; ++t) {
    const Mat moved = alpha * T;
    Mat next(moved.rows() * m, K);
    for (Eigen::Index p = 0; p < moved.rows(); ++p) {
      for (int x = 0; x < m; ++x) next.row(p * m + x) = moved.row(p).cwiseProduct(E.col(x).transpose());
    }
    alpha = std::move(next);
  }
  WindowJoint out;
  out.half_window = half_window;
  out.alphabet = m;
  const Vec total = alpha.rowwise().sum();
  out.prob.assign(total.data(), total.data() + total.size());
  return out;
}

// ---------------------------------------------------------------------------
// Operators

OperatorBundle build_operators(const WindowJoint& joint, int joint_size, int bottom_size) {
  const int W = joint.half_window;
  if (W < 1) throw ConfigError("operators need W >= 1");
  const int m = joint.alphabet;
  const auto mw = static_cast<Eigen::Index>(ipow(m, W));
  OperatorBundle b;
  b.half_window = W;
  b.alphabet = m;
  b.joint_size = joint_size;
  b.bottom_size = bottom_size;
  b.p_fp = Mat::Zero(mw, mw);
  b.p_fcp.assign(static_cast<std::size_t>(m), Mat(mw, mw));
  for (Eigen::Index p = 0; p < mw; ++p) {
    for (int x = 0; x < m; ++x) {
      for (Eigen::Index f = 0; f < mw; ++f) {
        const double v = joint.prob[static_cast<std::size_t>((p * m + x) * mw + f)];
        b.p_fcp[static_cast<std::size_t>(x)](f, p) = v;
        b.p_fp(f, p) += v;
      }
    }
  }
  // P(future | past) over past values with positive mass.
  const RowVec past_mass = b.p_fp.colwise().sum();
  std::vector<Eigen::Index> support;
  for (Eigen::Index p = 0; p < mw; ++p) {
    if (past_mass(p) > 0.0) support.push_back(p);
  }
  Mat conditional(mw, static_cast<Eigen::Index>(support.size()));
  for (std::size_t j = 0; j < support.size(); ++j) {
    conditional.col(static_cast<Eigen::Index>(j)) = b.p_fp.col(support[j]) / past_mass(support[j]);
  }
  b.singular_values = singular_values(conditional);
  const double top = b.singular_values.size() > 0 ? b.singular_values(0) : 0.0;
  b.numerical_rank = 0;
  for (Eigen::Index i = 0; i < b.singular_values.size(); ++i) {
    if (top > 0.0 && b.singular_values(i) / top > kRankThreshold) ++b.numerical_rank;
  }
  b.rank_ok = b.numerical_rank == joint_size;
  b.identity_error = std::numeric_limits<double>::quiet_NaN();
  if (!b.rank_ok) return b;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(b.p_fp), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::MatrixXd U = svd.matrixU().leftCols(joint_size);
  const Eigen::MatrixXd V = svd.matrixV().leftCols(joint_size);
  const Eigen::MatrixXd B = U.transpose() * Eigen::MatrixXd(b.p_fp) * V;
  const auto lu = B.transpose().partialPivLu();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(joint_size, joint_size);
  for (int x = 0; x < m; ++x) {
    const Eigen::MatrixXd C = U.transpose() * Eigen::MatrixXd(b.p_fcp[static_cast<std::size_t>(x)]) * V;
    const Eigen::MatrixXd A = lu.solve(C.transpose()).transpose();  // C B^{-1}
    sum += A;
    b.A.emplace_back(A);
  }
  b.identity_error = (sum - Eigen::MatrixXd::Identity(joint_size, joint_size)).cwiseAbs().maxCoeff();
  return b;
}

OperatorBundle build_operators(const DiscreteHierChain& chain, int half_window) {
  return build_operators(enumerate_joint(chain, half_window), chain.joint_size(), chain.layer_size(1));
}

// ---------------------------------------------------------------------------
// Recovery

Recovery recover_emissions(const OperatorBundle& bundle, std::uint64_t seed) {
  if (!bundle.rank_ok) {
    throw RecoveryRefused("injectivity diagnostic failed: numerical rank " + std::to_string(bundle.numerical_rank) +
                          " of P(future | past) is below the latent cardinality " + std::to_string(bundle.joint_size) +
                          " at W=" + std::to_string(bundle.half_window));
  }
  const int K = bundle.joint_size;
  const int m = bundle.alphabet;
  std::mt19937_64 rng(derive_seed(seed, "spectral-combination"));
  for (int attempt = 0; attempt < 16; ++attempt) {
    const Vec w = dirichlet_ones(m, rng);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(K, K);
    for (int x = 0; x < m; ++x) M += w(x) * bundle.A[static_cast<std::size_t>(x)];
    Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
    std::vector<double> lambda(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) lambda[static_cast<std::size_t>(k)] = es.eigenvalues()(k).real();
    std::sort(lambda.begin(), lambda.end());

    std::vector<std::pair<double, int>> clusters;  // (mean, size)
    for (std::size_t k = 0; k < lambda.size();) {
      std::size_t e = k + 1;
      while (e < lambda.size() && lambda[e] - lambda[e - 1] <= kClusterTolerance) ++e;
      const double mean = std::accumulate(lambda.begin() + static_cast<std::ptrdiff_t>(k),
                                          lambda.begin() + static_cast<std::ptrdiff_t>(e), 0.0) /
                          static_cast<double>(e - k);
      clusters.emplace_back(mean, static_cast<int>(e - k));
      k = e;
    }

    Recovery r;
    r.emissions.resize(m, K);
    bool scalar_blocks = true;
    int col = 0;
    for (const auto& [mean, size] : clusters) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(M - mean * Eigen::MatrixXd::Identity(K, K), Eigen::ComputeFullV);
      const Eigen::MatrixXd Q = svd.matrixV().rightCols(size);
      Vec tuple(m);
      for (int x = 0; x < m; ++x) {
        const Eigen::MatrixXd block = Q.transpose() * bundle.A[static_cast<std::size_t>(x)] * Q;
        tuple(x) = block.trace() / size;
        const Eigen::MatrixXd off = block - tuple(x) * Eigen::MatrixXd::Identity(size, size);
        if (off.cwiseAbs().maxCoeff() > kScalarBlockTolerance) scalar_blocks = false;
      }
      tuple /= tuple.sum();
      for (int d = 0; d < size; ++d) r.emissions.col(col++) = tuple;
      r.multiplicity.push_back(size);
    }
    if (!scalar_blocks) continue;
    r.distinct_tuples = static_cast<int>(clusters.size());
    r.collision = r.distinct_tuples < bundle.bottom_size;
    if (r.collision) {
      r.warnings.push_back("eigenvalue collision: " + std::to_string(r.distinct_tuples) +
                           " distinct emission tuples for " + std::to_string(bundle.bottom_size) +
                           " bottom-layer states; two latent states share an emission distribution");
    }
    return r;
  }
  throw NumericalError("simultaneous diagonalization failed: no random combination separated the eigenvalue tuples");
}

RecoveryComparison compare_emissions(const Recovery& recovery, const DiscreteHierChain& chain) {
  const Mat truth = chain.joint_emission().transpose();  // [m, K]
  const Mat& rec = recovery.emissions;
  if (rec.rows() != truth.rows() || rec.cols() != truth.cols()) {
    throw std::invalid_argument("compare_emissions: recovered table has the wrong shape");
  }
  const Eigen::Index K = truth.cols();
  Mat dist(K, K);
  for (Eigen::Index j = 0; j < K; ++j) {
    for (Eigen::Index i = 0; i < K; ++i) dist(j, i) = (rec.col(j) - truth.col(i)).cwiseAbs().maxCoeff();
  }
  RecoveryComparison out;
  out.assignment = max_weight_assignment(-dist);
  for (Eigen::Index j = 0; j < K; ++j) out.max_error = std::max(out.max_error, dist(j, out.assignment[static_cast<std::size_t>(j)]));
  out.hausdorff = std::max(dist.rowwise().minCoeff().maxCoeff(), dist.colwise().minCoeff().maxCoeff());
  return out;
}

// ---------------------------------------------------------------------------
// Sweep

Sweep minimal_window_sweep(const DiscreteHierChain& chain, const std::vector<int>& half_windows) {
  Sweep s;
  for (int W : half_windows) {
    const OperatorBundle b = build_operators(chain, W);
    SweepRow row;
    row.half_window = W;
    row.rank_ok = b.rank_ok;
    row.numerical_rank = b.numerical_rank;
    row.required_rank = b.joint_size;
    if (b.rank_ok) {
      const Recovery r = recover_emissions(b);
      const RecoveryComparison c = compare_emissions(r, chain);
      row.max_error = c.max_error;
      row.hausdorff = c.hausdorff;
      row.collision = r.collision;
      if (!s.transition) s.transition = W;
    }
    s.rows.push_back(row);
  }
  return s;
}

std::string Sweep::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "W,rank_ok,error,numerical_rank,required_rank\n";
  for (const auto& r : rows) {
    out << r.half_window << ',' << (r.rank_ok ? "true" : "false") << ',';
    if (r.max_error) out << *r.max_error;
    out << ',' << r.numerical_rank << ',' << r.required_rank << '\n';
  }
  return out.str();
}

nlohmann::json Sweep::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"W", r.half_window},
                         {"rank_ok", r.rank_ok},
                         {"numerical_rank", r.numerical_rank},
                         {"required_rank", r.required_rank},
                         {"max_error", r.max_error ? nlohmann::json(*r.max_error) : nlohmann::json()},
                         {"hausdorff", r.hausdorff ? nlohmann::json(*r.hausdorff) : nlohmann::json()},
                         {"collision", r.collision}});
  }
  return {{"rows", rows_json}, {"transition", transition ? nlohmann::json(*transition) : nlohmann::json()}};
}

}  // namespace child::spectral
