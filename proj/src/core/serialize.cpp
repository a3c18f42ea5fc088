#include "trustkit/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "trustkit/errors.hpp"

namespace trustkit {

nlohmann::json model_manifest(const MlpModel& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.layers()) {
    layers.push_back({{"in", l.in}, {"out", l.out}, {"activation", to_string(l.activation)}, {"dropout", l.dropout}});
  }
  return {{"format", "trustkit-mlp"},
          {"layers", layers},
          {"heads", model.heads()},
          {"param_count", model.param_count()},
          {"param_order", "layer-major; weight [out x in] row-major, then bias"}};
}

MlpModel model_from_manifest(const nlohmann::json& manifest) {
  try {
    std::vector<LayerSpec> layers;
    for (const auto& l : manifest.at("layers")) {
      layers.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                        activation_from_string(l.at("activation").get<std::string>()), l.value("dropout", 0.0)});
    }
    return MlpModel(std::move(layers), manifest.value("heads", std::size_t{1}));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad model manifest: ") + e.what());
  }
}

namespace {

void write_le(std::ofstream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

double read_le(const unsigned char* b) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::vector<std::filesystem::path> save_model(const MlpModel& model, const std::filesystem::path& stem) {
  std::filesystem::path json_path = stem;
  json_path += ".json";
  std::filesystem::path bin_path = stem;
  bin_path += ".bin";
  nlohmann::json m = model_manifest(model);
  m["blob"] = bin_path.filename().string();
  {
    std::ofstream out(json_path);
    if (!out) throw Error("cannot write " + json_path.string());
    out << m.dump(2) << '\n';
  }
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw Error("cannot write " + bin_path.string());
  for (double v : model.params()) write_le(out, v);
  return {json_path, bin_path};
}

MlpModel load_model(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error("cannot read " + manifest_path.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }
  MlpModel model = model_from_manifest(m);
  std::filesystem::path blob = manifest_path.parent_path() / m.value("blob", std::string());
  std::ifstream bin(blob, std::ios::binary);
  if (!bin) throw Error("cannot read parameter blob " + blob.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (bytes.size() != model.param_count() * 8) throw ParseError("parameter blob size does not match the manifest");
  std::vector<double> theta(model.param_count());
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = read_le(bytes.data() + 8 * i);
  model.set_params(std::move(theta));
  return model;
}

}  // namespace trustkit
