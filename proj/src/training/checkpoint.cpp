// Copyright 2026 The Partiscope Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstring>
#include <fstream>

#include "partiscope/error.hpp"
#include "partiscope/nn/architectures.hpp"
#include "partiscope/training/trainer.hpp"

// Layout (little-endian):
//   8  bytes  magic "PSCKPT01"
//   u32       format version
//   u32       header length, then UTF-8 JSON header
//   u64       parameter count, then float32 parameters
//   u32       mask count, then per mask: u32 length + bytes
//   u64       FNV-1a hash of every preceding byte

namespace partiscope::training {
namespace {

constexpr char kMagic[8] = {'P', 'S', 'C', 'K', 'P', 'T', '0', '1'};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size())
      throw DataError("checkpoint " + path_.string() + " is truncated");
  }
  const std::string& bytes_;
  std::filesystem::path path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ModelHandle& model, const std::filesystem::path& path) {
  const ImageShape in = model.net.input_shape();
  nlohmann::json header = {{"arch", model.arch},
                           {"num_classes", model.num_classes},
                           {"input_shape", {in.channels, in.height, in.width}},
                           {"epoch_losses", model.epoch_losses},
                           {"config", model.config_echo}};
  const std::string hs = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(hs.size()));
  out += hs;
  const auto params = model.net.flat_params();
  put<std::uint64_t>(out, params.size());
  out.append(reinterpret_cast<const char*>(params.data()), params.size() * sizeof(float));
  const auto masks = model.net.channel_masks();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(masks.size()));
  for (const auto& m : masks) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.size()));
    out.append(reinterpret_cast<const char*>(m.data()), m.size());
  }
  put<std::uint64_t>(out, fnv1a(out));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing checkpoint " + path.string());
}

ModelHandle load_checkpoint(const std::filesystem::path& path,
                            const std::optional<std::string>& expected_arch) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a checkpoint file: " + path.string());
  Reader r(bytes, path);
  r.take(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw DataError("checkpoint " + path.string() + " has format version " +
                    std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));
  const std::uint64_t stored = [&] {
    std::uint64_t h;
    std::memcpy(&h, bytes.data() + bytes.size() - sizeof(h), sizeof(h));
    return h;
  }();
  if (fnv1a(bytes.substr(0, bytes.size() - sizeof(std::uint64_t))) != stored)
    throw DataError("checkpoint " + path.string() + " failed its integrity check");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.take(r.get<std::uint32_t>()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path.string() + " has a malformed header: " + e.what());
  }
  ModelHandle h;
  h.arch = header.at("arch").get<std::string>();
  if (expected_arch && *expected_arch != h.arch)
    throw DataError("checkpoint " + path.string() + " holds architecture '" + h.arch +
                    "', expected '" + *expected_arch + "'");
  h.num_classes = header.at("num_classes").get<int>();
  const auto shape = header.at("input_shape").get<std::vector<int>>();
  h.epoch_losses = header.value("epoch_losses", std::vector<double>{});
  h.config_echo = header.value("config", nlohmann::json::object());
  h.net = nn::build_network(h.arch, {shape.at(0), shape.at(1), shape.at(2)}, h.num_classes, 0);

  const auto count = r.get<std::uint64_t>();
  const std::string blob = r.take(count * sizeof(float));
  std::vector<float> params(count);
  std::memcpy(params.data(), blob.data(), blob.size());
  h.net.set_flat_params(params);
  std::vector<std::vector<std::uint8_t>> masks(r.get<std::uint32_t>());
  for (auto& m : masks) {
    const std::string mb = r.take(r.get<std::uint32_t>());
    m.assign(mb.begin(), mb.end());
  }
  h.net.set_channel_masks(masks);
  if (r.pos() + sizeof(std::uint64_t) != bytes.size())
    throw DataError("checkpoint " + path.string() + " has trailing bytes");
  return h;
}

}  // namespace partiscope::training
