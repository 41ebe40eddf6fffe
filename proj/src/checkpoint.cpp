#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "reflex/error.hpp"
#include "reflex/tinylm.hpp"

namespace reflex::tinylm {

using nlohmann::json;

namespace {
constexpr const char* kManifest = "manifest.json";
constexpr const char* kBlob = "params.bin";
}  // namespace

void save_checkpoint(const ModelParams& params, const std::vector<std::string>& vocabulary,
                     const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create checkpoint directory " + dir.string());

  const auto& c = params.config();
  json manifest;
  manifest["config"] = {{"vocab_size", c.vocab_size}, {"n_layers", c.n_layers},
                        {"hidden_dim", c.hidden_dim}, {"n_heads", c.n_heads},
                        {"max_seq_len", c.max_seq_len}, {"seed", c.seed}};
  manifest["dtype"] = "f32-le";
  manifest["blob"] = kBlob;
  manifest["vocabulary"] = vocabulary;

  std::vector<char> blob;
  json tensors = json::array();
  for (const auto& t : params.tensors()) {
    const std::size_t offset = blob.size();
    detail::append_f32_le(blob, t.data);
    tensors.push_back({{"name", t.name},
                       {"shape", t.shape},
                       {"offset", offset},
                       {"length", blob.size() - offset}});
  }
  manifest["tensors"] = std::move(tensors);

  detail::write_file(dir / kBlob, blob);
  detail::write_text(dir / kManifest, manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(detail::read_text(dir / kManifest));
  } catch (const json::exception& e) {
    fail(ErrorKind::format, "bad checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  const auto blob = detail::read_file(dir / kBlob);

  Checkpoint out;
  ModelConfig cfg;
  std::vector<Tensor> tensors;
  try {
    if (manifest.at("dtype") != "f32-le") {
      fail(ErrorKind::unsupported_format, "checkpoint dtype must be f32-le");
    }
    const auto& jc = manifest.at("config");
    cfg.vocab_size = jc.at("vocab_size");
    cfg.n_layers = jc.at("n_layers");
    cfg.hidden_dim = jc.at("hidden_dim");
    cfg.n_heads = jc.at("n_heads");
    cfg.max_seq_len = jc.at("max_seq_len");
    cfg.seed = jc.at("seed");
    out.vocabulary = manifest.at("vocabulary").get<std::vector<std::string>>();
    for (const auto& jt : manifest.at("tensors")) {
      Tensor t;
      t.name = jt.at("name");
      t.shape = jt.at("shape").get<std::vector<std::size_t>>();
      const std::size_t offset = jt.at("offset");
      const std::size_t length = jt.at("length");
      std::size_t n = 1;
      for (auto s : t.shape) n *= s;
      if (length != n * 4 || offset > blob.size() || blob.size() - offset < length) {
        fail(ErrorKind::corruption, "tensor " + t.name + " overruns the checkpoint blob");
      }
      t.data.resize(n);
      detail::read_f32_le(blob.data() + offset, t.data);
      tensors.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::format, "bad checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  out.params = ModelParams(cfg, std::move(tensors));
  if (!out.params.all_finite()) {
    fail(ErrorKind::numeric, "checkpoint " + dir.string() + " contains non-finite values");
  }
  return out;
}

}  // namespace reflex::tinylm
