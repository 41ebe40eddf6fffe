#include "reflex/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "reflex/error.hpp"
#include "reflex/rng.hpp"
#include "reflex/tokenizer.hpp"

namespace reflex::corpus {

using nlohmann::json;

namespace {

constexpr std::string_view kSubjects[] = {
    "river", "mayor", "bridge", "museum", "senator", "factory",
    "harbor", "school", "airport", "stadium", "library", "council"};

constexpr std::string_view kPredicates[] = {
    "flooded", "closed", "expanded", "collapsed",
    "reopened", "doubled", "relocated", "failed"};

// Two openers per label so the correlation knob can tie style to the label.
constexpr std::string_view kOpeners[] = {
    "reports say", "a viral post claims", "officials stated",
    "it is rumored", "a blog wrote", "news outlets reported"};

constexpr std::string_view kClosers[] = {"", " last week", " according to sources",
                                         " this year"};

constexpr std::string_view kBoilerplate[] = {
    "as an ai language model i note that this is complex.",
    "it is important to always verify sources carefully.",
    "this topic is widely discussed online.",
};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string atom_phrase(const FactAtom& a) { return "the " + a.subject + " " + a.predicate; }

std::string make_claim(std::string_view opener, const FactAtom& a, const FactAtom& b,
                       std::string_view closer) {
  return std::string(opener) + " that " + atom_phrase(a) + " and " + atom_phrase(b) +
         std::string(closer) + ".";
}

std::string_view pick_opener(Rng& rng, VerdictLabel label, double correlation) {
  if (correlation > 0.0 && rng.uniform() < correlation) {
    return kOpeners[2 * to_index(label) + rng.below(2)];
  }
  return kOpeners[rng.below(std::size(kOpeners))];
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::eval: return "eval";
    case Split::test: return "test";
  }
  return "train";
}

std::optional<Split> split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "eval") return Split::eval;
  if (s == "test") return Split::test;
  return std::nullopt;
}

std::string_view to_string(IoMode mode) {
  switch (mode) {
    case IoMode::claim_to_verdict: return "c->v";
    case IoMode::claim_to_verdict_explanation: return "c->v;exp";
    case IoMode::claim_evidence_to_verdict: return "c;evi->v";
    case IoMode::claim_evidence_to_verdict_explanation: return "c;evi->v;exp";
  }
  return "c->v";
}

std::optional<IoMode> io_mode_from_string(std::string_view s) {
  for (IoMode m : {IoMode::claim_to_verdict, IoMode::claim_to_verdict_explanation,
                   IoMode::claim_evidence_to_verdict,
                   IoMode::claim_evidence_to_verdict_explanation}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

bool uses_evidence(IoMode mode) {
  return mode == IoMode::claim_evidence_to_verdict ||
         mode == IoMode::claim_evidence_to_verdict_explanation;
}

bool wants_explanation(IoMode mode) {
  return mode == IoMode::claim_to_verdict_explanation ||
         mode == IoMode::claim_evidence_to_verdict_explanation;
}

// ---------------------------------------------------------------------------

std::optional<LabelScheme> label_scheme_from_string(std::string_view s) {
  if (s == "rawfc") return LabelScheme::rawfc;
  if (s == "liar6") return LabelScheme::liar6;
  if (s == "averitec") return LabelScheme::averitec;
  return std::nullopt;
}

std::optional<VerdictLabel> unify_labels(std::string_view raw_label, LabelScheme scheme) {
  const std::string raw(raw_label);
  switch (scheme) {
    case LabelScheme::rawfc:
      if (raw == "true") return VerdictLabel::True;
      if (raw == "half") return VerdictLabel::Half;
      if (raw == "false") return VerdictLabel::False;
      break;
    case LabelScheme::liar6:
      if (raw == "pants-fire" || raw == "false" || raw == "barely-true") return VerdictLabel::False;
      if (raw == "half-true") return VerdictLabel::Half;
      if (raw == "mostly-true" || raw == "true") return VerdictLabel::True;
      break;
    case LabelScheme::averitec:
      if (raw == "Supported") return VerdictLabel::True;
      if (raw == "Refuted") return VerdictLabel::False;
      if (raw == "Not Enough Evidence") return VerdictLabel::Half;
      if (raw == "Conflicting Evidence/Cherrypicking") return std::nullopt;
      break;
  }
  fail(ErrorKind::scheme, "label '" + raw + "' is not part of the selected scheme");
}

// ---------------------------------------------------------------------------

DialogueSample format_dialogue(const ClaimRecord& record, IoMode mode) {
  const bool evi = uses_evidence(mode);
  const bool exp = wants_explanation(mode);
  if (evi && (!record.evidence || record.evidence->empty())) {
    fail(ErrorKind::input, "record " + record.id + " has no evidence but mode " +
                               std::string(to_string(mode)) + " requires it");
  }
  DialogueSample out;
  out.io_mode = mode;
  std::string p = "<user> You are a fact-checking assistant. You are given a claim";
  if (evi) p += " along with evidence sentences";
  p += ". Label the veracity of the claim as true, half or false";
  if (exp) p += " and explain your reasoning";
  p += ". Claim: " + record.claim;
  if (evi) {
    p += " Evidence:";
    for (const auto& e : *record.evidence) p += " " + e;
  }
  p += " <assistant>";
  out.prompt_text = std::move(p);

  out.target_text = std::string(kVerdictPrefix) + " " + std::string(label_word(record.verdict)) + ".";
  if (exp) out.target_text += " Explanation: " + record.explanation;
  return out;
}

std::optional<VerdictLabel> parse_verdict(std::string_view text) {
  struct Alias {
    std::string_view word;
    VerdictLabel label;
  };
  // Longer aliases first so "half-true" is not read as "half".
  static constexpr Alias kAliases[] = {
      {"not enough evidence", VerdictLabel::Half},
      {"half-true", VerdictLabel::Half},
      {"supported", VerdictLabel::True},
      {"refuted", VerdictLabel::False},
      {"false", VerdictLabel::False},
      {"half", VerdictLabel::Half},
      {"true", VerdictLabel::True},
      {"fase", VerdictLabel::False},
  };
  const std::string s = lower(text);
  std::set<VerdictLabel> found;
  std::size_t pos = 0;
  while ((pos = s.find("verdict", pos)) != std::string::npos) {
    std::size_t i = pos + 7;
    pos = i;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i >= s.size() || s[i] != ':') continue;
    ++i;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    for (const auto& alias : kAliases) {
      if (s.compare(i, alias.word.size(), alias.word) != 0) continue;
      const std::size_t end = i + alias.word.size();
      if (end < s.size() && (std::isalnum(static_cast<unsigned char>(s[end])) || s[end] == '-')) {
        continue;
      }
      found.insert(alias.label);
      break;
    }
  }
  if (found.size() != 1) return std::nullopt;
  return *found.begin();
}

// ---------------------------------------------------------------------------

FactWorld FactWorld::build(std::size_t n_subjects, std::size_t n_predicates, std::uint64_t seed) {
  if (n_subjects < 2 || n_subjects > std::size(kSubjects) || n_predicates < 1 ||
      n_predicates > std::size(kPredicates) || n_subjects * n_predicates < 4) {
    fail(ErrorKind::config, "fact world needs 2.." + std::to_string(std::size(kSubjects)) +
                                " subjects, 1.." + std::to_string(std::size(kPredicates)) +
                                " predicates and at least 4 atoms");
  }
  FactWorld w;
  for (std::size_t s = 0; s < n_subjects; ++s) {
    for (std::size_t p = 0; p < n_predicates; ++p) {
      w.atoms_.push_back({std::string(kSubjects[s]), std::string(kPredicates[p]), false});
    }
  }
  // Exactly half the atoms hold, chosen by the seed.
  std::vector<std::size_t> order(w.atoms_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed ^ 0x5eed'a70full);
  rng.shuffle(std::span(order));
  for (std::size_t i = 0; i < order.size() / 2; ++i) w.atoms_[order[i]].holds = true;
  return w;
}

std::optional<bool> FactWorld::holds(std::string_view subject, std::string_view predicate) const {
  for (const auto& a : atoms_) {
    if (a.subject == subject && a.predicate == predicate) return a.holds;
  }
  return std::nullopt;
}

std::optional<VerdictLabel> FactWorld::recompute_verdict(std::string_view claim) const {
  const auto words = Tokenizer::split(claim);
  int n_atoms = 0;
  int n_true = 0;
  for (std::size_t i = 0; i + 1 < words.size(); ++i) {
    if (auto h = holds(words[i], words[i + 1])) {
      ++n_atoms;
      n_true += *h ? 1 : 0;
    }
  }
  if (n_atoms == 0) return std::nullopt;
  return verdict_from_truths(n_true, n_atoms);
}

VerdictLabel verdict_from_truths(int n_true, int n_atoms) {
  if (n_true == 0) return VerdictLabel::False;
  if (n_true == n_atoms) return VerdictLabel::True;
  return VerdictLabel::Half;
}

void CorpusSpec::validate() const {
  if (n_train < 1 || n_eval < 1 || n_test < 1) {
    fail(ErrorKind::config, "corpus spec needs at least one sample per split");
  }
  double sum = 0.0;
  for (double p : label_balance) {
    if (!(p >= 0.0) || !std::isfinite(p)) fail(ErrorKind::config, "label proportions must be >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::config, "label proportions must sum to 1");
  if (style.label_correlation < 0.0 || style.label_correlation > 1.0 ||
      style.boilerplate_rate < 0.0 || style.boilerplate_rate > 1.0) {
    fail(ErrorKind::config, "style knobs are probabilities in [0, 1]");
  }
  // Construct once to validate the world dimensions.
  (void)FactWorld::build(n_subjects, n_predicates, seed);
}

std::array<std::size_t, 3> label_counts(std::size_t n, const std::array<double, 3>& balance) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = balance[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (rem[i] > rem[best] + 1e-12) best = i;
    }
    ++counts[best];
    rem[best] = -1.0;
    ++assigned;
  }
  return counts;
}

FactWorld world_for(const CorpusSpec& spec) {
  return FactWorld::build(spec.n_subjects, spec.n_predicates, spec.seed);
}

std::span<const std::string_view> boilerplate_sentences() { return kBoilerplate; }

std::vector<ClaimRecord> generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  const FactWorld world = world_for(spec);
  std::vector<const FactAtom*> true_atoms;
  std::vector<const FactAtom*> false_atoms;
  for (const auto& a : world.atoms()) (a.holds ? true_atoms : false_atoms).push_back(&a);

  Rng rng(spec.seed);
  std::vector<ClaimRecord> out;
  const std::pair<Split, std::size_t> splits[] = {
      {Split::train, spec.n_train}, {Split::eval, spec.n_eval}, {Split::test, spec.n_test}};

  for (const auto& [split, n] : splits) {
    const auto counts = label_counts(n, spec.label_balance);
    std::vector<VerdictLabel> labels;
    for (int l = 0; l < 3; ++l) labels.insert(labels.end(), counts[l], static_cast<VerdictLabel>(l));
    rng.shuffle(std::span(labels));

    for (std::size_t i = 0; i < labels.size(); ++i) {
      const VerdictLabel label = labels[i];
      auto draw = [&](const std::vector<const FactAtom*>& pool, const FactAtom* avoid) {
        const FactAtom* a;
        do {
          a = pool[rng.below(pool.size())];
        } while (a == avoid);
        return a;
      };
      const FactAtom* first;
      const FactAtom* second;
      switch (label) {
        case VerdictLabel::True:
          first = draw(true_atoms, nullptr);
          second = draw(true_atoms, first);
          break;
        case VerdictLabel::False:
          first = draw(false_atoms, nullptr);
          second = draw(false_atoms, first);
          break;
        case VerdictLabel::Half:
        default:
          first = draw(true_atoms, nullptr);
          second = draw(false_atoms, nullptr);
          if (rng.below(2) == 1) std::swap(first, second);
          break;
      }

      ClaimRecord r;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%05zu", std::string(to_string(split)).c_str(), i);
      r.id = id;
      r.split = split;
      r.verdict = label;
      const auto opener = pick_opener(rng, label, spec.style.label_correlation);
      const auto closer = kClosers[rng.below(std::size(kClosers))];
      r.claim = make_claim(opener, *first, *second, closer);

      if (spec.with_evidence) {
        std::vector<std::string> evidence;
        for (const FactAtom* a : {first, second}) {
          evidence.push_back(std::string(a->holds ? "records confirm that " : "records deny that ") +
                             atom_phrase(*a) + ".");
        }
        r.evidence = std::move(evidence);
      }

      std::vector<std::string> sentences;
      for (const FactAtom* a : {first, second}) {
        sentences.push_back(atom_phrase(*a) + (a->holds ? " is accurate." : " is inaccurate."));
      }
      if (spec.style.boilerplate_rate > 0.0 && rng.uniform() < spec.style.boilerplate_rate) {
        const auto bp = kBoilerplate[rng.below(std::size(kBoilerplate))];
        const auto at = rng.below(sentences.size() + 1);
        sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(at), std::string(bp));
      }
      for (std::size_t s = 0; s < sentences.size(); ++s) {
        if (s) r.explanation += ' ';
        r.explanation += sentences[s];
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<ClaimRecord> restyle(std::span<const ClaimRecord> records, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ClaimRecord> out(records.begin(), records.end());
  for (auto& r : out) {
    // Claims are "<opener> that the s p and the s p<closer>."
    const auto that = r.claim.find(" that the ");
    const auto and_pos = r.claim.find(" and the ");
    if (that == std::string::npos || and_pos == std::string::npos) continue;
    const auto words = Tokenizer::split(r.claim.substr(that));
    // words: that the s1 p1 and the s2 p2 [closer...] .
    if (words.size() < 8) continue;
    const FactAtom a{words[2], words[3], false};
    const FactAtom b{words[6], words[7], false};
    const auto opener = kOpeners[rng.below(std::size(kOpeners))];
    const auto closer = kClosers[rng.below(std::size(kClosers))];
    r.claim = make_claim(opener, a, b, closer);
  }
  return out;
}

std::vector<ClaimRecord> select_split(std::span<const ClaimRecord> records, Split split) {
  std::vector<ClaimRecord> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

std::vector<std::string> vocabulary_texts(std::span<const ClaimRecord> records) {
  std::vector<std::string> texts;
  for (const auto& r : records) {
    for (IoMode m : {IoMode::claim_to_verdict, IoMode::claim_to_verdict_explanation,
                     IoMode::claim_evidence_to_verdict,
                     IoMode::claim_evidence_to_verdict_explanation}) {
      if (uses_evidence(m) && (!r.evidence || r.evidence->empty())) continue;
      auto d = format_dialogue(r, m);
      texts.push_back(std::move(d.prompt_text));
      texts.push_back(std::move(d.target_text));
    }
  }
  for (auto v : kAllVerdicts) {
    ClaimRecord probe;
    probe.verdict = v;
    texts.push_back(format_dialogue(probe, IoMode::claim_to_verdict).target_text);
  }
  for (auto s : kOpeners) texts.emplace_back(s);
  for (auto s : kClosers) texts.emplace_back(s);
  return texts;
}

// ---------------------------------------------------------------------------

void write_corpus(const std::filesystem::path& path, std::span<const ClaimRecord> records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot write corpus file " + path.string());
  for (const auto& r : records) {
    json j;
    j["id"] = r.id;
    j["claim"] = r.claim;
    j["evidence"] = r.evidence ? json(*r.evidence) : json(nullptr);
    j["verdict"] = to_index(r.verdict);
    j["explanation"] = r.explanation;
    j["split"] = std::string(to_string(r.split));
    os << j.dump() << '\n';
  }
  if (!os) fail(ErrorKind::io, "failed writing corpus file " + path.string());
}

LoadResult read_corpus(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open corpus file " + path.string());
  static const std::set<std::string> kFields = {"id",          "claim", "evidence",
                                                "verdict",     "explanation", "split"};
  LoadResult out;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto where = [&] { return path.string() + ":" + std::to_string(lineno); };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::format, where() + ": " + e.what());
    }
    if (!j.is_object() || j.size() != kFields.size()) {
      fail(ErrorKind::format, where() + ": expected exactly the fields id, claim, evidence, "
                                        "verdict, explanation, split");
    }
    for (const auto& f : kFields) {
      if (!j.contains(f)) fail(ErrorKind::format, where() + ": missing field " + f);
    }
    ClaimRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.claim = j.at("claim").get<std::string>();
      if (!j.at("evidence").is_null()) r.evidence = j.at("evidence").get<std::vector<std::string>>();
      auto v = verdict_from_index(j.at("verdict").get<long long>());
      if (!v) fail(ErrorKind::format, where() + ": verdict must be 0, 1 or 2");
      r.verdict = *v;
      r.explanation = j.at("explanation").get<std::string>();
      auto s = split_from_string(j.at("split").get<std::string>());
      if (!s) fail(ErrorKind::format, where() + ": split must be train, eval or test");
      r.split = *s;
    } catch (const json::exception& e) {
      fail(ErrorKind::format, where() + ": " + e.what());
    }
    if (r.claim.empty()) fail(ErrorKind::format, where() + ": empty claim");
    if (!seen.emplace(r.id, lineno).second) {
      fail(ErrorKind::format, where() + ": duplicate id " + r.id);
    }
    if (options.drop_without_evidence && (!r.evidence || r.evidence->empty())) {
      ++out.dropped_without_evidence;
      continue;
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

}  // namespace reflex::corpus
