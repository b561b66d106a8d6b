#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cellloc/dataset.hpp"

namespace cellloc {

/// Windowed median over the current and M preceding labels (M + 1 values,
/// fewer at the start). Even-sized windows take the lower median.
std::vector<Label> median_filter(std::span<const Label> labels, std::size_t m);

/// Discrete HMM over n cell states observed through a noisy classifier.
///
/// a(i, j) = p(z_{t+1} = j | z_t = i), b(i, j) = p(y_t = j | z_t = i).
/// Matrices are row-major n x n. `forbidden` marks structural-zero
/// transitions (kept exactly 0 in A).
struct Hmm {
  std::size_t n = 0;
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> pi0;
  double epsilon = 0.0;
  std::vector<std::uint8_t> forbidden;

  double trans(std::size_t i, std::size_t j) const { return a[i * n + j]; }
  double emit(std::size_t i, std::size_t j) const { return b[i * n + j]; }

  /// Row sums within 1e-12, entries finite and >= 0, structural zeros hold.
  /// Throws DataError.
  void validate() const;

  std::string to_json() const;
  /// Parses and validates.
  static Hmm from_json(std::string_view json);

  friend bool operator==(const Hmm&, const Hmm&) = default;
};

struct HmmFitOptions {
  std::size_t n = kCellCount;
  /// Added to every count cell of the bigram table and the confusion matrix
  /// before row normalization. 0 disables smoothing.
  double epsilon = 1e-6;
  /// Structural-zero transitions as (from, to) pairs.
  std::vector<std::pair<std::size_t, std::size_t>> forbidden;

  /// Forbids the direct outside <-> test-position jumps (0 <-> 2).
  static HmmFitOptions cell_defaults(double epsilon = 1e-6, bool forbid = false);
};

/// Bigram counts of `truth` and confusion counts of (truth, predicted)
/// accumulated over one or more independent segments. Transitions are only
/// counted inside a segment.
struct HmmCounts {
  std::size_t n;
  std::vector<double> transitions;
  std::vector<double> confusion;

  explicit HmmCounts(std::size_t n_states)
      : n(n_states), transitions(n * n, 0.0), confusion(n * n, 0.0) {}
  void add_segment(std::span<const Label> truth, std::span<const Label> predicted);
};

/// Transition rows normalized by the number of transitions leaving each
/// state, emission rows by the number of frames in each true state, uniform
/// pi0. Rows without any mass (state never seen, epsilon 0) fall back to
/// uniform over the allowed cells.
Hmm fit_hmm(const HmmCounts& counts, const HmmFitOptions& options);
Hmm fit_hmm(std::span<const Label> truth, std::span<const Label> predicted,
            const HmmFitOptions& options = {});

/// Online forward filter state. `t` counts consumed observations; t == 0
/// means `pi` still holds pi0 and the next step does not propagate through A.
struct ForwardState {
  std::vector<double> pi;
  std::size_t t = 0;

  static ForwardState initial(const Hmm& hmm);
  /// Smallest index among the maxima of pi.
  std::size_t argmax() const;
};

/// One forward recursion step followed by renormalization of pi. Throws
/// DataError("observation impossible under model") when the unnormalized
/// posterior is all zero.
ForwardState forward_step(const ForwardState& state, const Hmm& hmm,
                          Label observed);

/// Causal filtering: z_t = argmax pi_t after consuming y_1..y_t.
std::vector<Label> hmm_filter(std::span<const Label> observed, const Hmm& hmm);

/// Offline most-probable state path (log domain). Ties prefer the smallest
/// state index, both for the final state and each back-pointer.
std::vector<Label> viterbi(std::span<const Label> observed, const Hmm& hmm);

/// Joint probability log p(z_{1:T}, y_{1:T}) under the same initialization as
/// the forward filter (pi0 applied directly to the first observation).
double path_log_probability(std::span<const Label> states,
                            std::span<const Label> observed, const Hmm& hmm);

}  // namespace cellloc
