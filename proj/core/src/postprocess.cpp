#include "cellloc/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "cellloc/error.hpp"

namespace cellloc {

namespace {

constexpr double kRowTolerance = 1e-12;
constexpr std::string_view kHmmFormat = "cellloc.hmm";
constexpr int kHmmVersion = 1;

void check_label(Label l, std::size_t n, const char* what) {
  if (l < 0 || static_cast<std::size_t>(l) >= n) {
    throw DataError(std::string(what) + " label " + std::to_string(l) +
                    " outside [0, " + std::to_string(n) + ")");
  }
}

// Normalizes each row of `m` in place. Rows without mass become uniform over
// the cells not marked in `forbidden`.
void normalize_rows(std::vector<double>& m, std::size_t n,
                    const std::vector<std::uint8_t>& forbidden) {
  for (std::size_t i = 0; i < n; ++i) {
    double* row = m.data() + i * n;
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += row[j];
    if (sum > 0.0) {
      for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
      continue;
    }
    std::size_t allowed = 0;
    for (std::size_t j = 0; j < n; ++j) {
      allowed += forbidden.empty() || !forbidden[i * n + j];
    }
    if (allowed == 0) {
      throw ConfigError("every transition out of state " + std::to_string(i) +
                        " is forbidden");
    }
    for (std::size_t j = 0; j < n; ++j) {
      const bool ok = forbidden.empty() || !forbidden[i * n + j];
      row[j] = ok ? 1.0 / static_cast<double>(allowed) : 0.0;
    }
  }
}

std::size_t first_argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

double safe_log(double p) {
  return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}

}  // namespace

// ---------------------------------------------------------------------------
// Median filter

std::vector<Label> median_filter(std::span<const Label> labels, std::size_t m) {
  if (labels.empty()) throw DataError("median_filter: empty input");
  // Labels are small non-negative integers, so a histogram over the window
  // gives the lower median without sorting.
  Label max_label = 0;
  for (Label l : labels) {
    if (l < 0) throw DataError("median_filter: negative label");
    max_label = std::max(max_label, l);
  }
  std::vector<std::size_t> hist(static_cast<std::size_t>(max_label) + 1, 0);
  std::vector<Label> out(labels.size());
  for (std::size_t t = 0; t < labels.size(); ++t) {
    ++hist[static_cast<std::size_t>(labels[t])];
    if (t > m) --hist[static_cast<std::size_t>(labels[t - m - 1])];
    const std::size_t count = std::min(t, m) + 1;
    const std::size_t rank = (count - 1) / 2;  // lower median, 0-based
    std::size_t seen = 0;
    for (std::size_t v = 0; v < hist.size(); ++v) {
      seen += hist[v];
      if (seen > rank) {
        out[t] = static_cast<Label>(v);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hmm

void Hmm::validate() const {
  if (n == 0) throw DataError("hmm: n must be >= 1");
  if (a.size() != n * n || b.size() != n * n || pi0.size() != n) {
    throw DataError("hmm: matrix sizes do not match n = " + std::to_string(n));
  }
  if (!forbidden.empty() && forbidden.size() != n * n) {
    throw DataError("hmm: structural-zero mask must be n x n");
  }
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw DataError("hmm: epsilon must be finite and >= 0");
  }
  auto check_rows = [&](const std::vector<double>& m, const char* name) {
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double v = m[i * n + j];
        if (!std::isfinite(v) || v < 0.0) {
          throw DataError(std::string("hmm: ") + name + " has an invalid entry");
        }
        sum += v;
      }
      if (std::abs(sum - 1.0) > kRowTolerance) {
        throw DataError(std::string("hmm: row ") + std::to_string(i) + " of " +
                        name + " sums to " + std::to_string(sum));
      }
    }
  };
  check_rows(a, "A");
  check_rows(b, "B");
  double sum = 0.0;
  for (double p : pi0) {
    if (!std::isfinite(p) || p < 0.0) throw DataError("hmm: invalid pi0 entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kRowTolerance) throw DataError("hmm: pi0 does not sum to 1");
  for (std::size_t k = 0; k < forbidden.size(); ++k) {
    if (forbidden[k] && a[k] != 0.0) {
      throw DataError("hmm: structural-zero transition has non-zero probability");
    }
  }
}

std::string Hmm::to_json() const {
  nlohmann::json j;
  j["format"] = kHmmFormat;
  j["version"] = kHmmVersion;
  j["n"] = n;
  j["A"] = a;
  j["B"] = b;
  j["pi0"] = pi0;
  j["epsilon"] = epsilon;
  std::vector<int> mask(n * n, 0);
  for (std::size_t k = 0; k < forbidden.size(); ++k) mask[k] = forbidden[k] ? 1 : 0;
  j["structural_zeros"] = mask;
  return j.dump(2);
}

Hmm Hmm::from_json(std::string_view text) {
  Hmm h;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != kHmmFormat ||
        j.at("version").get<int>() != kHmmVersion) {
      throw DataError("hmm: unsupported format or version");
    }
    h.n = j.at("n").get<std::size_t>();
    h.a = j.at("A").get<std::vector<double>>();
    h.b = j.at("B").get<std::vector<double>>();
    h.pi0 = j.at("pi0").get<std::vector<double>>();
    h.epsilon = j.at("epsilon").get<double>();
    for (int v : j.at("structural_zeros").get<std::vector<int>>()) {
      h.forbidden.push_back(v != 0 ? 1 : 0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("hmm: ") + e.what());
  }
  h.validate();
  return h;
}

HmmFitOptions HmmFitOptions::cell_defaults(double epsilon, bool forbid) {
  HmmFitOptions o;
  o.n = kCellCount;
  o.epsilon = epsilon;
  if (forbid) o.forbidden = {{0, 2}, {2, 0}};
  return o;
}

void HmmCounts::add_segment(std::span<const Label> truth,
                            std::span<const Label> predicted) {
  if (truth.size() != predicted.size()) {
    throw DataError("fit_hmm: truth and predicted lengths differ");
  }
  for (std::size_t t = 0; t < truth.size(); ++t) {
    check_label(truth[t], n, "truth");
    check_label(predicted[t], n, "predicted");
    confusion[static_cast<std::size_t>(truth[t]) * n +
              static_cast<std::size_t>(predicted[t])] += 1.0;
    if (t + 1 < truth.size()) {
      check_label(truth[t + 1], n, "truth");
      transitions[static_cast<std::size_t>(truth[t]) * n +
                  static_cast<std::size_t>(truth[t + 1])] += 1.0;
    }
  }
}

Hmm fit_hmm(const HmmCounts& counts, const HmmFitOptions& options) {
  const std::size_t n = options.n;
  if (n == 0 || counts.n != n) throw ConfigError("fit_hmm: state count mismatch");
  if (!(options.epsilon >= 0.0) || !std::isfinite(options.epsilon)) {
    throw ConfigError("fit_hmm: epsilon must be finite and >= 0");
  }

  Hmm h;
  h.n = n;
  h.epsilon = options.epsilon;
  h.forbidden.assign(n * n, 0);
  for (const auto& [i, j] : options.forbidden) {
    if (i >= n || j >= n) throw ConfigError("fit_hmm: structural zero out of range");
    h.forbidden[i * n + j] = 1;
  }

  h.a = counts.transitions;
  bool dropped = false;
  for (std::size_t k = 0; k < n * n; ++k) {
    if (h.forbidden[k]) {
      dropped = dropped || h.a[k] > 0.0;
      h.a[k] = 0.0;
    } else {
      h.a[k] += options.epsilon;
    }
  }
  if (dropped) warn("fit_hmm: training labels contain forbidden transitions; ignored");
  normalize_rows(h.a, n, h.forbidden);

  h.b = counts.confusion;
  for (double& c : h.b) c += options.epsilon;
  normalize_rows(h.b, n, {});

  h.pi0.assign(n, 1.0 / static_cast<double>(n));
  h.validate();
  return h;
}

Hmm fit_hmm(std::span<const Label> truth, std::span<const Label> predicted,
            const HmmFitOptions& options) {
  if (truth.size() != predicted.size()) {
    throw DataError("fit_hmm: truth and predicted lengths differ");
  }
  if (truth.size() < 2) throw DataError("fit_hmm: need at least two frames");
  HmmCounts counts(options.n);
  counts.add_segment(truth, predicted);
  return fit_hmm(counts, options);
}

// ---------------------------------------------------------------------------
// Forward filter

ForwardState ForwardState::initial(const Hmm& hmm) { return {hmm.pi0, 0}; }

std::size_t ForwardState::argmax() const { return first_argmax(pi); }

ForwardState forward_step(const ForwardState& state, const Hmm& hmm,
                          Label observed) {
  const std::size_t n = hmm.n;
  check_label(observed, n, "observed");
  if (state.pi.size() != n) throw DataError("forward_step: state size mismatch");

  const auto y = static_cast<std::size_t>(observed);
  ForwardState next{std::vector<double>(n, 0.0), state.t + 1};
  if (state.t == 0) {
    for (std::size_t j = 0; j < n; ++j) next.pi[j] = state.pi[j];
  } else {
    double mass = 0.0;
    for (double p : state.pi) mass += p;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = state.pi[i] / mass;
      for (std::size_t j = 0; j < n; ++j) next.pi[j] += p * hmm.trans(i, j);
    }
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    next.pi[j] *= hmm.emit(j, y);
    sum += next.pi[j];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    throw DataError("observation impossible under model");
  }
  for (double& p : next.pi) p /= sum;
  return next;
}

std::vector<Label> hmm_filter(std::span<const Label> observed, const Hmm& hmm) {
  if (observed.empty()) throw DataError("hmm_filter: empty input");
  std::vector<Label> out;
  out.reserve(observed.size());
  auto state = ForwardState::initial(hmm);
  for (Label y : observed) {
    state = forward_step(state, hmm, y);
    out.push_back(static_cast<Label>(state.argmax()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Viterbi

std::vector<Label> viterbi(std::span<const Label> observed, const Hmm& hmm) {
  if (observed.empty()) throw DataError("viterbi: empty input");
  const std::size_t n = hmm.n;
  const std::size_t len = observed.size();
  for (Label y : observed) check_label(y, n, "observed");

  std::vector<double> log_a(n * n), log_b(n * n);
  for (std::size_t k = 0; k < n * n; ++k) {
    log_a[k] = safe_log(hmm.a[k]);
    log_b[k] = safe_log(hmm.b[k]);
  }

  std::vector<double> delta(n), next(n);
  std::vector<std::size_t> back(len * n, 0);
  const auto y0 = static_cast<std::size_t>(observed[0]);
  for (std::size_t j = 0; j < n; ++j) {
    delta[j] = safe_log(hmm.pi0[j]) + log_b[j * n + y0];
  }
  for (std::size_t t = 1; t < len; ++t) {
    const auto y = static_cast<std::size_t>(observed[t]);
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t arg = 0;
      double best = delta[0] + log_a[j];
      for (std::size_t i = 1; i < n; ++i) {
        const double v = delta[i] + log_a[i * n + j];
        if (v > best) {
          best = v;
          arg = i;
        }
      }
      next[j] = best + log_b[j * n + y];
      back[t * n + j] = arg;
    }
    std::swap(delta, next);
  }

  std::vector<Label> path(len);
  std::size_t state = first_argmax(delta);
  for (std::size_t t = len; t-- > 0;) {
    path[t] = static_cast<Label>(state);
    if (t > 0) state = back[t * n + state];
  }
  return path;
}

double path_log_probability(std::span<const Label> states,
                            std::span<const Label> observed, const Hmm& hmm) {
  if (states.size() != observed.size() || states.empty()) {
    throw DataError("path_log_probability: length mismatch or empty");
  }
  const std::size_t n = hmm.n;
  double lp = 0.0;
  for (std::size_t t = 0; t < states.size(); ++t) {
    check_label(states[t], n, "state");
    check_label(observed[t], n, "observed");
    const auto z = static_cast<std::size_t>(states[t]);
    lp += t == 0 ? safe_log(hmm.pi0[z])
                 : safe_log(hmm.trans(static_cast<std::size_t>(states[t - 1]), z));
    lp += safe_log(hmm.emit(z, static_cast<std::size_t>(observed[t])));
  }
  return lp;
}

}  // namespace cellloc
