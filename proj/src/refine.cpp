#include "reflex/refine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "binary_io.hpp"
#include "reflex/error.hpp"

namespace reflex::refine {

std::vector<Span> sentence_spans(std::span<const std::string> tokens) {
  std::vector<Span> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (is_sentence_end(tokens[i])) {
      out.push_back({start, i + 1});
      start = i + 1;
    }
  }
  if (start < tokens.size()) out.push_back({start, tokens.size()});
  return out;
}

AlignmentTrace make_trace(std::vector<std::string> tokens, std::vector<double> scores,
                          std::size_t layer) {
  if (tokens.size() != scores.size()) fail(ErrorKind::shape, "tokens and scores differ in length");
  AlignmentTrace t;
  t.sentence_spans = sentence_spans(tokens);
  t.tokens = std::move(tokens);
  t.scores = std::move(scores);
  t.layer = layer;
  return t;
}

AlignmentTrace alignment_scores(const HiddenStates& hidden, std::size_t first_token,
                                std::vector<std::string> tokens, const SteeringVector& steering) {
  if (steering.layer >= hidden.n_layers) {
    fail(ErrorKind::shape, "steering layer " + std::to_string(steering.layer) +
                               " is outside the recorded layers");
  }
  if (steering.direction.size() != hidden.dim) {
    fail(ErrorKind::shape, "steering vector has dimension " +
                               std::to_string(steering.direction.size()) + ", hidden states " +
                               std::to_string(hidden.dim));
  }
  if (first_token > hidden.n_tokens || hidden.n_tokens - first_token != tokens.size()) {
    fail(ErrorKind::shape, "token count does not match the hidden states");
  }
  double s_norm = 0.0;
  for (float v : steering.direction) s_norm += static_cast<double>(v) * v;
  s_norm = std::sqrt(s_norm);

  std::vector<double> scores(tokens.size(), 0.0);
  std::size_t zero = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto h = hidden.at(steering.layer, first_token + i);
    double dot = 0.0, hn = 0.0;
    for (std::size_t j = 0; j < h.size(); ++j) {
      dot += static_cast<double>(h[j]) * steering.direction[j];
      hn += static_cast<double>(h[j]) * h[j];
    }
    if (hn == 0.0 || s_norm == 0.0) {
      ++zero;
      continue;
    }
    scores[i] = std::clamp(dot / (std::sqrt(hn) * s_norm), -1.0, 1.0);
  }
  auto t = make_trace(std::move(tokens), std::move(scores), steering.layer);
  t.zero_norm_tokens = zero;
  return t;
}

AlignmentTrace alignment_scores(const tinylm::ForwardTrace& trace, const Tokenizer& tokenizer,
                                std::size_t first_token, const SteeringVector& steering) {
  if (first_token > trace.token_ids.size()) fail(ErrorKind::shape, "first_token past the trace");
  std::vector<std::string> words;
  for (std::size_t i = first_token; i < trace.token_ids.size(); ++i) {
    words.push_back(tokenizer.word(trace.token_ids[i]));
  }
  return alignment_scores(trace.hidden, first_token, std::move(words), steering);
}

// ---------------------------------------------------------------------------
// Ratcliff–Obershelp

namespace {

struct Range {
  std::size_t alo, ahi, blo, bhi;
};

}  // namespace

std::size_t ro_matches(std::string_view a, std::string_view b) {
  thread_local std::vector<std::size_t> prev, cur;
  thread_local std::vector<Range> stack;
  prev.assign(b.size() + 1, 0);
  cur.assign(b.size() + 1, 0);
  stack.clear();
  stack.push_back({0, a.size(), 0, b.size()});
  std::size_t total = 0;
  while (!stack.empty()) {
    const Range r = stack.back();
    stack.pop_back();
    if (r.alo >= r.ahi || r.blo >= r.bhi) continue;
    // Longest common substring; scanning ends in (i, j) order and replacing
    // only on a strictly longer match keeps the earliest start in a, then b.
    std::size_t best = 0, bi = 0, bj = 0;
    std::fill(prev.begin() + r.blo, prev.begin() + r.bhi + 1, 0);
    for (std::size_t i = r.alo; i < r.ahi; ++i) {
      cur[r.blo] = 0;
      for (std::size_t j = r.blo; j < r.bhi; ++j) {
        const std::size_t len = a[i] == b[j] ? prev[j] + 1 : 0;
        cur[j + 1] = len;
        if (len > best) {
          best = len;
          bi = i + 1 - len;
          bj = j + 1 - len;
        }
      }
      std::swap(prev, cur);
    }
    if (best == 0) continue;
    total += best;
    stack.push_back({bi + best, r.ahi, bj + best, r.bhi});
    stack.push_back({r.alo, bi, r.blo, bj});
  }
  return total;
}

double ro_similarity(std::string_view a, std::string_view b) {
  const std::size_t n = a.size() + b.size();
  if (n == 0) return 1.0;
  return 2.0 * static_cast<double>(ro_matches(a, b)) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Detection and suppression

void DensityConfig::validate() const {
  if (!(score_threshold <= 0.0) || !(score_threshold >= -1.0)) {
    fail(ErrorKind::config, "score_threshold must lie in [-1, 0]");
  }
  if (!(density_threshold > 0.0 && density_threshold <= 1.0)) {
    fail(ErrorKind::config, "density_threshold must lie in (0, 1]");
  }
}

std::vector<Span> detect_negative_spans(const AlignmentTrace& trace, const DensityConfig& config) {
  config.validate();
  if (trace.scores.size() != trace.tokens.size()) {
    fail(ErrorKind::shape, "trace scores and tokens differ in length");
  }
  std::vector<Span> out;
  for (const auto& s : trace.sentence_spans) {
    if (s.size() == 0) continue;
    std::size_t neg = 0;
    for (std::size_t i = s.start; i < s.end; ++i) neg += trace.scores[i] < config.score_threshold;
    if (static_cast<double>(neg) >= config.density_threshold * static_cast<double>(s.size())) {
      out.push_back(s);
    }
  }
  return out;
}

std::string span_text(const AlignmentTrace& trace, Span span) {
  std::string out;
  for (std::size_t i = span.start; i < span.end && i < trace.tokens.size(); ++i) {
    if (!out.empty()) out += ' ';
    out += trace.tokens[i];
  }
  return out;
}

std::vector<std::string> build_pattern_bank(std::span<const std::string> flagged_texts,
                                            std::size_t min_frequency) {
  std::map<std::string_view, std::size_t> counts;
  for (const auto& t : flagged_texts) ++counts[t];
  std::vector<std::string> out;
  for (const auto& t : flagged_texts) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second >= min_frequency) {
      out.push_back(t);
      counts.erase(it);
    }
  }
  return out;
}

bool is_verdict_span(const AlignmentTrace& trace, Span span) {
  for (std::size_t i = span.start; i + 1 < span.end && i + 1 < trace.tokens.size(); ++i) {
    if (trace.tokens[i] == "verdict" && trace.tokens[i + 1] == ":") return true;
  }
  return false;
}

SuppressionReport suppress(const AlignmentTrace& trace, std::span<const Span> flagged,
                           std::span<const std::string> pattern_bank, double ro_threshold) {
  if (!(ro_threshold > 0.0 && ro_threshold <= 1.0)) {
    fail(ErrorKind::config, "ro_threshold must lie in (0, 1]");
  }
  const std::size_t n = trace.tokens.size();
  if (trace.scores.size() != n) fail(ErrorKind::shape, "trace scores and tokens differ in length");

  std::vector<Span> protect;
  for (const auto& s : trace.sentence_spans) {
    if (is_verdict_span(trace, s)) protect.push_back(s);
  }

  SuppressionReport rep;
  rep.input_text = span_text(trace, {0, n});
  std::vector<bool> drop(n, false);
  std::size_t last_end = 0;
  for (const auto& raw : flagged) {
    if (raw.start > raw.end || raw.end > n) fail(ErrorKind::input, "flagged span out of range");
    if (raw.start < last_end) fail(ErrorKind::input, "flagged spans overlap or are unordered");
    last_end = raw.end;

    // Clip against the verdict sentence; keep the longer remaining piece.
    Span span = raw;
    for (const auto& p : protect) {
      if (span.start >= p.end || span.end <= p.start) continue;
      const Span left{span.start, std::max(span.start, p.start)};
      const Span right{std::min(span.end, p.end), span.end};
      span = left.size() >= right.size() ? left : right;
      rep.warnings.push_back("span [" + std::to_string(raw.start) + ", " +
                             std::to_string(raw.end) + ") covers the verdict line; clipped");
    }

    FlaggedSpan f;
    f.span = span;
    if (span.size() > 0) {
      double sum = 0.0;
      for (std::size_t i = span.start; i < span.end; ++i) sum += trace.scores[i];
      f.mean_score = sum / static_cast<double>(span.size());
      const auto text = span_text(trace, span);
      for (const auto& pat : pattern_bank) {
        const double r = ro_similarity(text, pat);
        if (r > f.best_ratio) {
          f.best_ratio = r;
          if (r >= ro_threshold) f.matched_pattern = pat;
        }
      }
      f.removed = pattern_bank.empty() || f.matched_pattern.has_value();
      if (f.removed) {
        for (std::size_t i = span.start; i < span.end; ++i) drop[i] = true;
      }
    }
    rep.flagged.push_back(std::move(f));
  }

  std::vector<std::string> kept_tokens;
  std::vector<double> kept_scores;
  for (std::size_t i = 0; i < n; ++i) {
    if (drop[i]) {
      ++rep.removed_token_count;
      continue;
    }
    kept_tokens.push_back(trace.tokens[i]);
    kept_scores.push_back(trace.scores[i]);
  }
  rep.output = make_trace(std::move(kept_tokens), std::move(kept_scores), trace.layer);
  rep.output_text = span_text(rep.output, {0, rep.output.tokens.size()});
  return rep;
}

// ---------------------------------------------------------------------------
// HTML

namespace {

std::string escape_html(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string token_style(double score) {
  const double s = std::clamp(std::isfinite(score) ? score : 0.0, -1.0, 1.0);
  long r = 255, g = 255, b = 255;
  if (s > 0) {
    g = b = std::lround(255.0 * (1.0 - s));
  } else if (s < 0) {
    r = g = std::lround(255.0 * (1.0 + s));
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "background-color: rgb(%ld, %ld, %ld)", r, g, b);
  return buf;
}

std::string alignment_html(const AlignmentTrace& trace) {
  std::string out =
      "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
      "<title>alignment, layer " +
      std::to_string(trace.layer) +
      "</title>\n</head>\n<body>\n<p style=\"font-family: monospace; line-height: 1.8\">\n";
  char score[32];
  for (std::size_t i = 0; i < trace.tokens.size(); ++i) {
    std::snprintf(score, sizeof score, "%.4f", trace.scores[i]);
    out += "<span style=\"" + token_style(trace.scores[i]) + "\" title=\"" + score + "\">" +
           escape_html(trace.tokens[i]) + "</span>\n";
  }
  out += "</p>\n</body>\n</html>\n";
  return out;
}

void render_alignment_html(const AlignmentTrace& trace, const std::filesystem::path& path) {
  detail::write_text(path, alignment_html(trace));
}

}  // namespace reflex::refine
