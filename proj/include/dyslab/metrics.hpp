#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dyslab/nn/graph.hpp"

namespace dyslab::metrics {

/// counts[true][predicted]
struct ConfusionMatrix {
  std::size_t n_classes = 0;
  std::vector<std::size_t> counts;

  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * n_classes + predicted]; }
  std::size_t total() const;
  std::size_t trace() const;
  std::size_t row_sum(std::size_t truth) const;
  double accuracy() const;
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, std::size_t n_classes);
double accuracy(std::span<const int> preds, std::span<const int> labels);

// ------------------------------------------------------------------ WER

struct TranscriptPair {
  std::string reference;
  std::string hypothesis;
};

/// Lowercase, drop [bracketed] spans, strip punctuation except apostrophes,
/// split on whitespace.
std::vector<std::string> tokenize_transcript(std::string_view text);

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_words = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
};

/// Unit-cost word-level Levenshtein alignment of hypothesis against reference.
EditCounts align_words(std::span<const std::string> reference, std::span<const std::string> hypothesis);

/// (S + D + I) / N. Both sides empty gives 0; an empty reference with a
/// non-empty hypothesis throws EmptyReference.
double wer(const TranscriptPair& pair);

struct CorpusWer {
  EditCounts totals;
  std::size_t pairs = 0;
  double rate() const;
};

/// Pools edit counts over all pairs (total errors / total reference words).
CorpusWer corpus_wer(std::span<const TranscriptPair> pairs);

/// `reference<TAB>hypothesis` per line; blank lines are skipped.
std::vector<TranscriptPair> read_wer_tsv(const std::filesystem::path& path);

// ------------------------------------------------------------------ L1

struct SpectrogramPair {
  Tensor input;
  Tensor target;
};

/// Mean over pairs of the per-pair mean absolute difference between the
/// model's eval-mode prediction and the target.
double eval_l1(const nn::ModelGraph& model, std::span<const SpectrogramPair> pairs);

}  // namespace dyslab::metrics
