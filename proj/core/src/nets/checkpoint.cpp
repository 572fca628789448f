#include "vcgan/nets/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "vcgan/error.hpp"

namespace vcgan::nets {

namespace {

constexpr char kMagic[4] = {'V', 'C', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using Json = nlohmann::json;

void append_section(Json& index, std::vector<float>& blob, const std::string& section,
                    const std::map<std::string, nn::Tensor<float>>& tensors) {
  for (const auto& [name, t] : tensors) {
    index.push_back({{"section", section},
                     {"name", name},
                     {"shape", {t.shape.n, t.shape.c, t.shape.h, t.shape.w}},
                     {"offset", blob.size()}});
    blob.insert(blob.end(), t.data.begin(), t.data.end());
  }
}

[[noreturn]] void bad(const std::filesystem::path& path, const std::string& why) {
  throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": " + why);
}

}  // namespace

std::string checkpoint_name(std::int64_t step) { return "ckpt_" + std::to_string(step) + ".bin"; }

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  Json header;
  header["arch"] = Json::parse(arch_to_json(c.params.arch));
  header["n_speakers"] = c.params.n_speakers;
  header["step"] = c.step;
  header["rng_state"] = c.rng_state;
  header["meta"] = Json::parse(c.meta.empty() ? "{}" : c.meta);
  header["adam_steps"] = {{"fe", c.adam_fe.step}, {"gen", c.adam_gen.step}, {"disc", c.adam_disc.step}};

  Json index = Json::array();
  std::vector<float> blob;
  append_section(index, blob, "fe", c.params.fe.tensors);
  append_section(index, blob, "gen", c.params.gen.tensors);
  append_section(index, blob, "disc", c.params.disc.tensors);
  append_section(index, blob, "adam_fe.m", c.adam_fe.m);
  append_section(index, blob, "adam_fe.v", c.adam_fe.v);
  append_section(index, blob, "adam_gen.m", c.adam_gen.m);
  append_section(index, blob, "adam_gen.v", c.adam_gen.v);
  append_section(index, blob, "adam_disc.m", c.adam_disc.m);
  append_section(index, blob, "adam_disc.v", c.adam_disc.v);
  header["tensors"] = std::move(index);
  header["blob_floats"] = blob.size();

  const std::string text = header.dump();
  // Write to a sibling file first so a crash never leaves a torn checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    const std::uint64_t len = text.size();
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!out) throw Error(ErrorCode::kIoError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kFileNotFound, path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, 4) != 0) bad(path, "not a checkpoint");
  if (version != kVersion) bad(path, "unsupported checkpoint version " + std::to_string(version));
  if (len > (1ULL << 30)) bad(path, "implausible header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) bad(path, "truncated header");

  Checkpoint c;
  try {
    const Json header = Json::parse(text);
    c.params.arch = arch_from_json(header.at("arch").dump());
    c.params.n_speakers = header.at("n_speakers").get<int>();
    c.step = header.at("step").get<std::int64_t>();
    c.rng_state = header.at("rng_state").get<std::string>();
    c.meta = header.value("meta", Json::object()).dump();
    const auto& steps = header.at("adam_steps");
    c.adam_fe.step = steps.at("fe").get<std::int64_t>();
    c.adam_gen.step = steps.at("gen").get<std::int64_t>();
    c.adam_disc.step = steps.at("disc").get<std::int64_t>();

    const auto n_floats = header.at("blob_floats").get<std::size_t>();
    std::vector<float> blob(n_floats);
    in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(n_floats * sizeof(float)));
    if (!in) bad(path, "truncated parameter data");

    std::map<std::string, std::map<std::string, nn::Tensor<float>>*> sections = {
        {"fe", &c.params.fe.tensors},       {"gen", &c.params.gen.tensors},
        {"disc", &c.params.disc.tensors},   {"adam_fe.m", &c.adam_fe.m},
        {"adam_fe.v", &c.adam_fe.v},        {"adam_gen.m", &c.adam_gen.m},
        {"adam_gen.v", &c.adam_gen.v},      {"adam_disc.m", &c.adam_disc.m},
        {"adam_disc.v", &c.adam_disc.v},
    };
    for (const auto& entry : header.at("tensors")) {
      const auto section = entry.at("section").get<std::string>();
      auto it = sections.find(section);
      if (it == sections.end()) bad(path, "unknown section " + section);
      const auto dims = entry.at("shape").get<std::array<int, 4>>();
      const nn::Shape shape{dims[0], dims[1], dims[2], dims[3]};
      const auto offset = entry.at("offset").get<std::size_t>();
      if (offset + shape.numel() > blob.size()) bad(path, "tensor outside the data blob");
      std::vector<float> values(blob.begin() + offset, blob.begin() + offset + shape.numel());
      it->second->emplace(entry.at("name").get<std::string>(), nn::Tensor<float>(shape, std::move(values)));
    }
  } catch (const nlohmann::json::exception& e) {
    bad(path, std::string("malformed header: ") + e.what());
  }
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ArchConfig& arch, int n_speakers) {
  Checkpoint c = load_checkpoint(path);
  if (!(c.params.arch == arch)) {
    throw Error(ErrorCode::kCheckpointMismatch, path.string() + " was written for a different architecture");
  }
  if (c.params.n_speakers != n_speakers) {
    throw Error(ErrorCode::kCheckpointMismatch, path.string() + " holds " + std::to_string(c.params.n_speakers) +
                                                    " speakers, expected " + std::to_string(n_speakers));
  }
  return c;
}

}  // namespace vcgan::nets
