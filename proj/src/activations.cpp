#include "reflex/activations.hpp"

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "reflex/error.hpp"

namespace reflex::activations {

using nlohmann::json;

namespace {
constexpr const char* kManifest = "manifest.json";
constexpr const char* kIndex = "index.ndjson";
constexpr const char* kBlob = "activations.bin";
}  // namespace

std::string_view to_string(Source source) {
  return source == Source::base ? "base" : "sft";
}

std::optional<Source> source_from_string(std::string_view s) {
  if (s == "base") return Source::base;
  if (s == "sft") return Source::sft;
  return std::nullopt;
}

std::string_view to_string(Pooling pooling) {
  return pooling == Pooling::last_prompt_token ? "last_prompt_token" : "mean_answer_tokens";
}

std::optional<Pooling> pooling_from_string(std::string_view s) {
  if (s == "last_prompt_token") return Pooling::last_prompt_token;
  if (s == "mean_answer_tokens") return Pooling::mean_answer_tokens;
  return std::nullopt;
}

ActivationSet capture(const tinylm::ModelParams& params, const Tokenizer& tokenizer,
                      std::string sample_id, const corpus::DialogueSample& sample,
                      VerdictLabel gold, Source source, const CaptureOptions& options) {
  const auto prompt = tokenizer.encode(sample.prompt_text);
  const std::size_t max_len = params.config().max_seq_len;
  if (prompt.empty() || prompt.size() >= max_len) {
    fail(ErrorKind::input, "prompt of sample " + sample_id + " has " +
                               std::to_string(prompt.size()) + " tokens; max_seq_len is " +
                               std::to_string(max_len));
  }
  tinylm::DecodeOptions d;
  d.max_new = std::min(options.max_new, max_len - prompt.size());
  d.eos_id = tokenizer.eos_id();
  auto generated = tinylm::greedy_decode(params, prompt, d);
  if (!generated.empty() && generated.back() == tokenizer.eos_id()) generated.pop_back();

  std::vector<TokenId> full = prompt;
  full.insert(full.end(), generated.begin(), generated.end());
  auto trace = tinylm::forward(params, full);

  ActivationSet out;
  out.sample_id = std::move(sample_id);
  out.gold = gold;
  out.source = source;
  out.generated_text = tokenizer.decode(generated);
  out.predicted = corpus::parse_verdict(out.generated_text);
  out.hidden = std::move(trace.hidden);
  out.probe_feature_position = prompt.size() - 1;
  out.answer_start = prompt.size();
  return out;
}

std::vector<float> pool_feature(const ActivationSet& set, std::size_t layer, Pooling pooling) {
  const auto& h = set.hidden;
  if (layer >= h.n_layers) {
    fail(ErrorKind::shape, "layer " + std::to_string(layer) + " out of range for " +
                               std::to_string(h.n_layers) + " layers");
  }
  if (pooling == Pooling::last_prompt_token) {
    const auto row = h.at(layer, set.probe_feature_position);
    return {row.begin(), row.end()};
  }
  if (set.answer_start >= h.n_tokens) {
    fail(ErrorKind::input, "sample " + set.sample_id + " has no answer tokens to pool");
  }
  std::vector<double> acc(h.dim, 0.0);
  for (std::size_t t = set.answer_start; t < h.n_tokens; ++t) {
    const auto row = h.at(layer, t);
    for (std::size_t i = 0; i < h.dim; ++i) acc[i] += row[i];
  }
  const double n = static_cast<double>(h.n_tokens - set.answer_start);
  std::vector<float> out(h.dim);
  for (std::size_t i = 0; i < h.dim; ++i) out[i] = static_cast<float>(acc[i] / n);
  return out;
}

DumpManifest write_dump(const std::filesystem::path& dir, std::span<const ActivationSet> sets,
                        const std::string& model_id, const std::string& created_by) {
  if (sets.empty()) fail(ErrorKind::input, "refusing to write an empty dump");
  if (created_by != "internal" && created_by != "external") {
    fail(ErrorKind::input, "created_by must be internal or external");
  }
  DumpManifest m;
  m.model_id = model_id;
  m.n_layers = sets[0].hidden.n_layers;
  m.hidden_dim = sets[0].hidden.dim;
  m.record_count = sets.size();
  m.created_by = created_by;

  std::vector<char> blob;
  std::string index;
  for (const auto& s : sets) {
    const auto& h = s.hidden;
    if (h.n_layers != m.n_layers || h.dim != m.hidden_dim) {
      fail(ErrorKind::format, "record " + s.sample_id + " has shape " +
                                  std::to_string(h.n_layers) + "x" + std::to_string(h.dim) +
                                  ", dump has " + std::to_string(m.n_layers) + "x" +
                                  std::to_string(m.hidden_dim));
    }
    if (h.values.size() != h.n_layers * h.n_tokens * h.dim || h.n_tokens == 0 ||
        s.probe_feature_position >= h.n_tokens || s.answer_start > h.n_tokens) {
      fail(ErrorKind::format, "record " + s.sample_id + " is internally inconsistent");
    }
    const std::size_t offset = blob.size();
    json layer_offsets = json::array();
    for (std::size_t l = 0; l < h.n_layers; ++l) {
      layer_offsets.push_back(blob.size());
      detail::append_f32_le(blob, h.layer(l));
    }
    json j;
    j["sample_id"] = s.sample_id;
    j["gold"] = to_index(s.gold);
    j["predicted"] = s.predicted ? json(to_index(*s.predicted)) : json(nullptr);
    j["source"] = std::string(to_string(s.source));
    j["n_tokens"] = h.n_tokens;
    j["probe_feature_position"] = s.probe_feature_position;
    j["answer_start"] = s.answer_start;
    j["generated_text"] = s.generated_text;
    j["offset"] = offset;
    j["length"] = blob.size() - offset;
    j["layer_offsets"] = std::move(layer_offsets);
    index += j.dump() + "\n";
  }

  json jm;
  jm["model_id"] = m.model_id;
  jm["n_layers"] = m.n_layers;
  jm["hidden_dim"] = m.hidden_dim;
  jm["dtype"] = m.dtype;
  jm["record_count"] = m.record_count;
  jm["created_by"] = m.created_by;

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create dump directory " + dir.string());
  detail::write_file(dir / kBlob, blob);
  detail::write_text(dir / kIndex, index);
  detail::write_text(dir / kManifest, jm.dump(2) + "\n");
  return m;
}

Dump read_dump(const std::filesystem::path& dir) {
  Dump out;
  auto& m = out.manifest;
  try {
    const auto jm = json::parse(detail::read_text(dir / kManifest));
    m.dtype = jm.at("dtype").get<std::string>();
    if (m.dtype != kDumpDtype) {
      fail(ErrorKind::unsupported_format,
           "dump " + dir.string() + " has dtype '" + m.dtype + "', only f32-le is supported");
    }
    m.model_id = jm.at("model_id").get<std::string>();
    m.n_layers = jm.at("n_layers").get<std::size_t>();
    m.hidden_dim = jm.at("hidden_dim").get<std::size_t>();
    m.record_count = jm.at("record_count").get<std::size_t>();
    m.created_by = jm.at("created_by").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::format, "bad dump manifest in " + dir.string() + ": " + e.what());
  }
  if (m.n_layers == 0 || m.hidden_dim == 0) {
    fail(ErrorKind::format, "dump manifest declares an empty shape");
  }

  const auto blob = detail::read_file(dir / kBlob);
  const auto index_text = detail::read_text(dir / kIndex);
  std::size_t expected_end = 0;
  std::size_t pos = 0;
  std::size_t lineno = 0;
  while (pos < index_text.size()) {
    auto nl = index_text.find('\n', pos);
    if (nl == std::string::npos) nl = index_text.size();
    const auto line = index_text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (line.empty()) continue;

    ActivationSet s;
    std::size_t offset = 0, length = 0, n_tokens = 0;
    std::vector<std::size_t> layer_offsets;
    try {
      const auto j = json::parse(line);
      s.sample_id = j.at("sample_id").get<std::string>();
      const auto gold = verdict_from_index(j.at("gold").get<long long>());
      if (!gold) fail(ErrorKind::format, "record " + s.sample_id + ": gold must be 0, 1 or 2");
      s.gold = *gold;
      if (!j.at("predicted").is_null()) {
        s.predicted = verdict_from_index(j.at("predicted").get<long long>());
        if (!s.predicted) fail(ErrorKind::format, "record " + s.sample_id + ": bad predicted");
      }
      const auto src = source_from_string(j.at("source").get<std::string>());
      if (!src) fail(ErrorKind::format, "record " + s.sample_id + ": bad source");
      s.source = *src;
      n_tokens = j.at("n_tokens").get<std::size_t>();
      s.probe_feature_position = j.at("probe_feature_position").get<std::size_t>();
      s.answer_start = j.at("answer_start").get<std::size_t>();
      s.generated_text = j.at("generated_text").get<std::string>();
      offset = j.at("offset").get<std::size_t>();
      length = j.at("length").get<std::size_t>();
      layer_offsets = j.at("layer_offsets").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
      fail(ErrorKind::format, dir.string() + "/index.ndjson:" + std::to_string(lineno) + ": " +
                                  e.what());
    }
    const std::string who = "record " + std::to_string(out.sets.size()) + " (" + s.sample_id + ")";
    const std::size_t layer_bytes = n_tokens * m.hidden_dim * 4;
    if (n_tokens == 0 || length != m.n_layers * layer_bytes ||
        layer_offsets.size() != m.n_layers) {
      fail(ErrorKind::format, who + " does not match the manifest shape");
    }
    if (s.probe_feature_position >= n_tokens || s.answer_start > n_tokens) {
      fail(ErrorKind::format, who + " has positions outside its token range");
    }
    if (offset > blob.size() || blob.size() - offset < length) {
      fail(ErrorKind::corruption, who + " overruns activations.bin (offset " +
                                      std::to_string(offset) + ", length " +
                                      std::to_string(length) + ", blob " +
                                      std::to_string(blob.size()) + " bytes)");
    }
    for (std::size_t l = 0; l < m.n_layers; ++l) {
      if (layer_offsets[l] != offset + l * layer_bytes) {
        fail(ErrorKind::corruption, who + " has an inconsistent layer offset");
      }
    }
    s.hidden = HiddenStates(m.n_layers, n_tokens, m.hidden_dim);
    detail::read_f32_le(blob.data() + offset, s.hidden.values);
    if (!s.hidden.all_finite()) fail(ErrorKind::numeric, who + " contains non-finite values");
    expected_end = std::max(expected_end, offset + length);
    out.sets.push_back(std::move(s));
  }
  if (out.sets.size() != m.record_count) {
    fail(ErrorKind::format, "dump manifest declares " + std::to_string(m.record_count) +
                                " records but the index has " + std::to_string(out.sets.size()));
  }
  if (expected_end != blob.size()) {
    fail(ErrorKind::corruption, "activations.bin has " + std::to_string(blob.size()) +
                                    " bytes but the index covers " + std::to_string(expected_end));
  }
  return out;
}

}  // namespace reflex::activations
