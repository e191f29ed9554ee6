#include "tdflow/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace tdflow {

namespace {

constexpr char kMagic[8] = {'T', 'D', 'F', 'L', 'O', 'W', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) {
    throw IoError("checkpoint: truncated file");
  }
  return v;
}

void put_tensors(std::ostream& os, const std::string& prefix, const ModelParams& p) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::string name = prefix + p.name(i);
    put(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(os, static_cast<std::uint32_t>(p[i].rows()));
    put(os, static_cast<std::uint32_t>(p[i].cols()));
    os.write(reinterpret_cast<const char*>(p[i].data()), static_cast<std::streamsize>(p[i].size() * 8));
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  require(ck.online.same_shapes(ck.target), "checkpoint: online and target parameters differ in shape");
  nlohmann::json header;
  header["architecture"] = nlohmann::json::parse(ck.arch.to_json());
  try {
    header["metadata"] = nlohmann::json::parse(ck.metadata_json);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: metadata is not valid JSON: ") + e.what());
  }
  header["step"] = ck.step;
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw IoError("checkpoint: cannot open " + path.string() + " for writing");
  }
  os.write(kMagic, sizeof(kMagic));
  put(os, kVersion);
  put(os, static_cast<std::uint64_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put(os, static_cast<std::uint32_t>(ck.online.size() + ck.target.size()));
  put_tensors(os, "online/", ck.online);
  put_tensors(os, "target/", ck.target);
  if (!os) {
    throw IoError("checkpoint: write failed for " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw IoError("checkpoint: cannot open " + path.string());
  }
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("checkpoint: bad magic in " + path.string());
  }
  if (get<std::uint32_t>(is) != kVersion) {
    throw IoError("checkpoint: unsupported version in " + path.string());
  }
  std::string text(get<std::uint64_t>(is), '\0');
  is.read(text.data(), static_cast<std::streamsize>(text.size()));
  if (!is) {
    throw IoError("checkpoint: truncated header");
  }
  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(text);
    ck.arch = Architecture::from_json(header.at("architecture").dump());
    ck.metadata_json = header.at("metadata").dump();
    ck.step = header.at("step").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: malformed header: ") + e.what());
  }
  const auto count = get<std::uint32_t>(is);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name(get<std::uint32_t>(is), '\0');
    is.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto rows = get<std::uint32_t>(is);
    const auto cols = get<std::uint32_t>(is);
    Mat value(rows, cols);
    is.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(value.size() * 8));
    if (!is) {
      throw IoError("checkpoint: truncated tensor " + name);
    }
    if (name.rfind("online/", 0) == 0) {
      ck.online.add(name.substr(7), std::move(value));
    } else if (name.rfind("target/", 0) == 0) {
      ck.target.add(name.substr(7), std::move(value));
    } else {
      throw IoError("checkpoint: unexpected tensor " + name);
    }
  }
  // Validates tensor shapes against the declared architecture.
  try {
    VectorFieldNet check_online(ck.arch, ck.online);
    VectorFieldNet check_target(ck.arch, ck.target);
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const Architecture& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.arch == expected)) {
    throw ConfigError("checkpoint architecture " + ck.arch.to_json() + " does not match expected " +
                      expected.to_json());
  }
  return ck;
}

}  // namespace tdflow
