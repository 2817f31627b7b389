#include "dyslab/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dyslab/error.hpp"

namespace dyslab::metrics {

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < n_classes; ++i) t += at(i, i);
  return t;
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::size_t s = 0;
  for (std::size_t j = 0; j < n_classes; ++j) s += at(truth, j);
  return s;
}

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  if (n == 0) throw Error(ErrorCode::Empty, "accuracy of an empty confusion matrix");
  return static_cast<double>(trace()) / static_cast<double>(n);
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, std::size_t n_classes) {
  if (preds.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(preds.size()) + " predictions vs " +
                                               std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw Error(ErrorCode::Empty, "no predictions");
  ConfusionMatrix cm{n_classes, std::vector<std::size_t>(n_classes * n_classes, 0)};
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || labels[i] < 0 || static_cast<std::size_t>(preds[i]) >= n_classes ||
        static_cast<std::size_t>(labels[i]) >= n_classes) {
      throw Error(ErrorCode::OutOfRange, "class index outside 0.." + std::to_string(n_classes - 1));
    }
    ++cm.counts[static_cast<std::size_t>(labels[i]) * n_classes + static_cast<std::size_t>(preds[i])];
  }
  return cm;
}

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "preds and labels differ in length");
  if (preds.empty()) throw Error(ErrorCode::Empty, "no predictions");
  const int hi = std::max(*std::max_element(preds.begin(), preds.end()),
                          *std::max_element(labels.begin(), labels.end()));
  return confusion(preds, labels, static_cast<std::size_t>(hi) + 1).accuracy();
}

std::vector<std::string> tokenize_transcript(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  int depth = 0;
  for (char ch : text) {
    if (ch == '[') {
      ++depth;
      cleaned.push_back(' ');
      continue;
    }
    if (ch == ']' && depth > 0) {
      --depth;
      continue;
    }
    if (depth > 0) continue;
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      cleaned.push_back(' ');
    } else if (ch == '\'' || std::isalnum(c) || c >= 0x80) {
      cleaned.push_back(static_cast<char>(std::tolower(c)));
    } else {
      cleaned.push_back(' ');
    }
  }
  std::vector<std::string> words;
  std::istringstream in(cleaned);
  for (std::string w; in >> w;) words.push_back(std::move(w));
  return words;
}

EditCounts align_words(std::span<const std::string> ref, std::span<const std::string> hyp) {
  struct Cell {
    std::size_t cost = 0, sub = 0, del = 0, ins = 0;
  };
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<Cell> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = {j, 0, 0, j};
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = {i, 0, i, 0};
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = ref[i - 1] == hyp[j - 1];
      Cell diag = prev[j - 1];
      diag.cost += same ? 0 : 1;
      diag.sub += same ? 0 : 1;
      Cell del = prev[j];
      ++del.cost;
      ++del.del;
      Cell ins = cur[j - 1];
      ++ins.cost;
      ++ins.ins;
      // prefer the diagonal on ties, then deletions
      Cell best = diag;
      if (del.cost < best.cost) best = del;
      if (ins.cost < best.cost) best = ins;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  const Cell& end = prev[m];
  return EditCounts{end.sub, end.del, end.ins, n};
}

double wer(const TranscriptPair& pair) {
  const auto ref = tokenize_transcript(pair.reference);
  const auto hyp = tokenize_transcript(pair.hypothesis);
  if (ref.empty()) {
    if (hyp.empty()) return 0.0;
    throw Error(ErrorCode::EmptyReference, "reference has no words but hypothesis does");
  }
  const auto e = align_words(ref, hyp);
  return static_cast<double>(e.errors()) / static_cast<double>(e.reference_words);
}

double CorpusWer::rate() const {
  if (totals.reference_words == 0) {
    if (totals.errors() == 0) return 0.0;
    throw Error(ErrorCode::EmptyReference, "corpus has no reference words");
  }
  return static_cast<double>(totals.errors()) / static_cast<double>(totals.reference_words);
}

CorpusWer corpus_wer(std::span<const TranscriptPair> pairs) {
  CorpusWer out;
  for (const auto& p : pairs) {
    const auto ref = tokenize_transcript(p.reference);
    const auto hyp = tokenize_transcript(p.hypothesis);
    if (ref.empty() && !hyp.empty()) {
      throw Error(ErrorCode::EmptyReference, "pair " + std::to_string(out.pairs + 1) + " has an empty reference");
    }
    const auto e = align_words(ref, hyp);
    out.totals.substitutions += e.substitutions;
    out.totals.deletions += e.deletions;
    out.totals.insertions += e.insertions;
    out.totals.reference_words += e.reference_words;
    ++out.pairs;
  }
  return out;
}

std::vector<TranscriptPair> read_wer_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::vector<TranscriptPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, path.string() + ":" + std::to_string(lineno) + ": missing tab");
    }
    pairs.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return pairs;
}

double eval_l1(const nn::ModelGraph& model, std::span<const SpectrogramPair> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::Empty, "eval_l1 on an empty set");
  double total = 0.0;
  for (const auto& p : pairs) {
    const Tensor pred = model.forward(p.input);
    require_same_shape(pred, p.target, "eval_l1");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(static_cast<double>(pred[i]) - p.target[i]);
    total += s / static_cast<double>(pred.size());
  }
  return total / static_cast<double>(pairs.size());
}

}  // namespace dyslab::metrics
