/*
 * Copyright 2026 The FD-VAE Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fdvae/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "fdvae/error.hpp"

namespace fdvae {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'D', 'V', 'A', 'E', 'C', 'K', '1'};

Error Incompatible(const std::filesystem::path& path, const std::string& why) {
  return DataError("IncompatibleCheckpoint", path.string() + ": " + why);
}

}  // namespace

Checkpoint NewCheckpoint(const exp::ExperimentConfig& config, std::uint64_t seed) {
  Checkpoint ck;
  ck.config = config;
  ck.config_hash = exp::ConfigHash(config);
  ck.seed = seed;
  ck.bundle = std::make_shared<model::ModelBundle>(exp::ModelSpecFor(config), seed);
  return ck;
}

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (!ck.bundle) throw InternalError("EmptyCheckpoint", "checkpoint has no bundle");
  auto named = ck.bundle->NamedParameters();
  json index = json::array();
  for (const auto& [name, p] : named) {
    index.push_back({{"name", name}, {"shape", p->value.shape()}});
  }
  json header = {{"format_version", kCheckpointVersion},
                 {"config", exp::ToJson(ck.config)},
                 {"config_hash", ck.config_hash},
                 {"seed", ck.seed},
                 {"epoch", ck.epoch},
                 {"log_digest", ck.log_digest},
                 {"phase", ck.phase},
                 {"removed_dims", ck.removed_dims},
                 {"tensors", index}};
  if (ck.has_downstream()) {
    header["downstream"] = {{"task_input_dim", ck.bundle->downstream->spec.task_input_dim},
                            {"transform", ck.bundle->downstream->spec.transform}};
  }
  const std::string text = header.dump();

  // Write to a sibling file and rename so readers never see a torn file.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("UnwritableFile", "cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t length = text.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&length), sizeof length);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, p] : named) {
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    }
    if (!out) throw DataError("UnwritableFile", "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("MissingCheckpoint", "cannot open " + path.string());
  char magic[sizeof kMagic];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw Incompatible(path, "not a checkpoint file");
  }
  if (version != kCheckpointVersion) {
    throw Incompatible(path, "unsupported format version " + std::to_string(version));
  }
  if (length > (std::uint64_t{1} << 30)) throw Incompatible(path, "corrupt header length");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw Incompatible(path, "truncated header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw Incompatible(path, std::string("bad header: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.config = exp::ConfigFromJson(header.at("config"));
    ck.config_hash = header.at("config_hash").get<std::string>();
    ck.seed = header.at("seed").get<std::uint64_t>();
    ck.epoch = header.at("epoch").get<std::size_t>();
    ck.log_digest = header.at("log_digest").get<std::string>();
    ck.phase = header.at("phase").get<std::string>();
    ck.removed_dims = header.at("removed_dims").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw Incompatible(path, std::string("bad header: ") + e.what());
  }
  if (ck.config_hash != exp::ConfigHash(ck.config)) {
    throw Incompatible(path, "config hash does not match the stored config");
  }
  ck.bundle = std::make_shared<model::ModelBundle>(exp::ModelSpecFor(ck.config), ck.seed);
  if (header.contains("downstream")) {
    model::DownstreamSpec spec;
    spec.task_input_dim = header["downstream"].at("task_input_dim").get<std::size_t>();
    spec.transform = header["downstream"].at("transform").get<bool>();
    ck.bundle->AttachDownstream(spec, ck.seed);
  }

  auto named = ck.bundle->NamedParameters();
  const json& index = header.at("tensors");
  if (index.size() != named.size()) {
    throw Incompatible(path, "tensor count " + std::to_string(index.size()) +
                                 " does not match the architecture (" +
                                 std::to_string(named.size()) + ")");
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto& [name, p] = named[i];
    if (index[i].at("name") != name || index[i].at("shape").get<Shape>() != p->value.shape()) {
      throw Incompatible(path, "tensor " + index[i].at("name").get<std::string>() +
                                   " does not match " + name + " " +
                                   ShapeString(p->value.shape()));
    }
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    if (!in) throw Incompatible(path, "truncated tensor data at " + name);
  }
  return ck;
}

}  // namespace fdvae
