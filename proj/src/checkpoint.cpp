#include "hbaf/checkpoint.hpp"

#include "hbaf/errors.hpp"
#include "hbaf/kv_file.hpp"
#include "hbaf/run_config.hpp"

#include "binary_io.hpp"

namespace hbaf {

namespace {

constexpr std::string_view kMagic = "HBAFCKPT";
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const ModelConfig& config,
                     const ParameterStore& params, const std::vector<std::string>& class_names) {
  std::string out(kMagic);
  io::put_le(out, kVersion);
  const std::string header =
      model_config_to_text(config) + "classes = " + kv::join_list(class_names) + "\n";
  io::put_le(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  io::put_le(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter& p : params.all()) {
    io::put_le(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    io::put_le(out, static_cast<std::uint32_t>(p.value.rows()));
    io::put_le(out, static_cast<std::uint32_t>(p.value.cols()));
    for (Index i = 0; i < p.value.size(); ++i) {
      io::put_le(out, std::bit_cast<std::uint64_t>(p.value.data()[i]));
    }
  }
  io::put_le(out, io::fnv1a(out));
  io::write_bytes(file, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::string bytes = io::read_bytes(file);
  const std::string source = file.string();
  if (bytes.size() < kMagic.size() + 8) throw DataError(source + ": truncated checkpoint");
  {
    io::Reader tail(bytes.substr(bytes.size() - 8), source);
    if (tail.get<std::uint64_t>() != io::fnv1a(std::string_view(bytes).substr(0, bytes.size() - 8))) {
      throw DataError(source + ": checksum mismatch");
    }
  }
  bytes.resize(bytes.size() - 8);
  io::Reader in(std::move(bytes), source);
  in.expect(kMagic);
  if (in.get<std::uint32_t>() != kVersion) throw DataError(source + ": unsupported version");
  const std::string header = in.get_bytes(in.get<std::uint32_t>());

  Checkpoint ck;
  std::vector<kv::Entry> model_entries;
  for (kv::Entry& e : kv::parse(header, source)) {
    if (e.key == "classes") {
      ck.class_names = kv::split_list(e.value);
    } else {
      model_entries.push_back(std::move(e));
    }
  }
  ck.config = model_config_from_entries(model_entries);
  if (static_cast<int>(ck.class_names.size()) != ck.config.num_classes) {
    throw DataError(source + ": class names do not match num_classes");
  }

  const std::uint32_t count = in.get<std::uint32_t>();
  ParameterStore params;
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = in.get_bytes(in.get<std::uint32_t>());
    const auto rows = static_cast<Index>(in.get<std::uint32_t>());
    const auto cols = static_cast<Index>(in.get<std::uint32_t>());
    Parameter& p = params.create(std::move(name), rows, cols);
    for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = in.get_f64();
  }
  if (!in.at_end()) throw DataError(source + ": trailing bytes");
  // Validates names and shapes against the config.
  HbafModel check(ck.config, params);
  ck.params = std::move(check.params());
  return ck;
}

}  // namespace hbaf
