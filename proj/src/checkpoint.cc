#include "p2c/checkpoint.h"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "p2c/errors.h"

namespace p2c {
namespace {

constexpr std::array<char, 8> kMagic = {'P', '2', 'C', 'C', 'K', 'P', 'T', '\n'};

void write_u64(std::ostream& out, std::uint64_t v, int bytes = 8) {
  for (int i = 0; i < bytes; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64(std::istream& in, int bytes = 8) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) {
      throw FormatError("checkpoint truncated");
    }
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"variant", variant_name(c.variant)},
          {"pinyin_embed", c.pinyin_embed},
          {"target_embed", c.target_embed},
          {"gru_hidden", c.gru_hidden},
          {"lstm_layers", c.lstm_layers},
          {"lstm_cells", c.lstm_cells},
          {"ga_hops", c.ga_hops},
          {"dropout", c.dropout},
          {"front_init", c.front_init}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.pinyin_embed = j.at("pinyin_embed").get<std::size_t>();
  c.target_embed = j.at("target_embed").get<std::size_t>();
  c.gru_hidden = j.at("gru_hidden").get<std::size_t>();
  c.lstm_layers = j.at("lstm_layers").get<std::size_t>();
  c.lstm_cells = j.at("lstm_cells").get<std::size_t>();
  c.ga_hops = j.at("ga_hops").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.front_init = j.at("front_init").get<double>();
  return c;
}

}  // namespace

void save_checkpoint(const P2CModel& model, std::ostream& out) {
  nlohmann::json header;
  header["config"] = config_to_json(model.config());
  header["vocab"] = {{"pinyin", model.vocabs().pinyin.tokens()},
                     {"target", model.vocabs().target.tokens()}};
  nlohmann::json params = nlohmann::json::array();
  for (const auto& [name, t] : model.params().entries()) {
    params.push_back({{"name", name}, {"shape", t.shape()}});
  }
  header["params"] = std::move(params);
  const std::string text = header.dump();

  out.write(kMagic.data(), kMagic.size());
  write_u64(out, kCheckpointVersion, 4);
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : model.params().entries()) {
    for (double v : t.values()) write_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw FormatError("failed writing checkpoint");
}

P2CModel load_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw FormatError("not a p2c checkpoint");
  const auto version = read_u64(in, 4);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version));
  }
  const auto length = read_u64(in);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw FormatError("checkpoint header truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }
  try {
    const ModelConfig config = config_from_json(header.at("config"));
    Vocabularies vocabs{
        Vocab::from_tokens(header.at("vocab").at("pinyin").get<std::vector<std::string>>()),
        Vocab::from_tokens(header.at("vocab").at("target").get<std::vector<std::string>>())};
    P2CModel model = P2CModel::skeleton(config, std::move(vocabs));

    const auto& listed = header.at("params");
    auto& entries = model.params().entries();
    if (listed.size() != entries.size()) {
      throw FormatError("checkpoint lists " + std::to_string(listed.size()) +
                        " parameters, model has " +
                        std::to_string(entries.size()));
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& [name, t] = entries[i];
      if (listed[i].at("name").get<std::string>() != name ||
          listed[i].at("shape").get<Shape>() != t.shape()) {
        throw FormatError("checkpoint parameter " + std::to_string(i) +
                          " does not match " + name + " " +
                          shape_to_string(t.shape()));
      }
      for (double& v : t.mutable_values()) {
        v = std::bit_cast<double>(read_u64(in));
      }
    }
    if (in.peek() != std::char_traits<char>::eof()) {
      throw FormatError("trailing bytes after checkpoint");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }
}

void save_checkpoint_file(const P2CModel& model,
                          const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    save_checkpoint(model, out);
  }
  std::filesystem::rename(tmp, path);
}

P2CModel load_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace p2c
