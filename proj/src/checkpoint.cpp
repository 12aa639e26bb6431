#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "ubpl/io.hpp"

namespace ubpl {
namespace {

constexpr char kMagic[4] = {'U', 'B', 'P', 'L'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double d) {
  uint64_t u;
  std::memcpy(&u, &d, sizeof u);
  put_u64(buf, u);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size())
      throw NumericError("checkpoint file is truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    const uint64_t u = u64();
    double d;
    std::memcpy(&d, &u, sizeof d);
    return d;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& records) {
  std::string buf;
  buf.append(kMagic, sizeof kMagic);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<uint32_t>(records.size()));
  for (const auto& r : records) {
    put_u32(buf, static_cast<uint32_t>(r.name.size()));
    buf.append(r.name);
    put_u64(buf, r.values.size());
    for (double v : r.values) put_f64(buf, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw NumericError("cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw NumericError("failed to write " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NumericError("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  Reader r{buf};
  if (r.bytes(4) != std::string(kMagic, sizeof kMagic))
    throw NumericError(path + " is not a checkpoint file (bad magic)");
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw NumericError("unsupported checkpoint version " +
                       std::to_string(version));
  const uint32_t count = r.u32();
  Checkpoint records;
  records.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointRecord rec;
    rec.name = r.bytes(r.u32());
    const uint64_t n = r.u64();
    rec.values.reserve(n);
    for (uint64_t j = 0; j < n; ++j) rec.values.push_back(r.f64());
    records.push_back(std::move(rec));
  }
  if (r.pos != buf.size())
    throw NumericError("checkpoint file has trailing bytes");
  return records;
}

namespace {

void append_model(Checkpoint& out, const Model& m, const std::string& base) {
  const auto& names = m.param_names();
  const auto& params = m.params();
  for (size_t i = 0; i < params.size(); ++i)
    out.push_back({base + names[i], params[i].values()});
}

const CheckpointRecord& find_record(const Checkpoint& records,
                                    const std::string& name) {
  for (const auto& r : records)
    if (r.name == name) return r;
  throw ShapeError("checkpoint is missing record " + name);
}

void restore_model(Model& m, const Checkpoint& records,
                   const std::string& base) {
  const auto& names = m.param_names();
  auto& params = m.params();
  for (size_t i = 0; i < params.size(); ++i) {
    const CheckpointRecord& r = find_record(records, base + names[i]);
    if (static_cast<int>(r.values.size()) != params[i].size())
      throw ShapeError("checkpoint record " + r.name + " has " +
                       std::to_string(r.values.size()) +
                       " values, the model expects " +
                       std::to_string(params[i].size()));
    params[i].leaf_values() = r.values;
  }
}

int64_t to_count(double v, const std::string& what) {
  if (!(v >= 0.0) || v != std::floor(v))
    throw NumericError("checkpoint field " + what + " is not a valid count");
  return static_cast<int64_t>(v);
}

}  // namespace

Checkpoint branch_checkpoint(const BranchState& branch,
                             const std::string& prefix) {
  Checkpoint out;
  out.push_back({prefix + "counters",
                 {static_cast<double>(branch.step),
                  static_cast<double>(branch.opt.steps_taken())}});
  append_model(out, branch.model, prefix + "model.");
  if (branch.teacher) append_model(out, *branch.teacher, prefix + "teacher.");
  for (const auto& [name, values] : branch.opt.state())
    out.push_back({prefix + "opt." + name, values});
  return out;
}

void restore_branch(BranchState& branch, const Checkpoint& records,
                    const std::string& prefix) {
  const CheckpointRecord& counters = find_record(records, prefix + "counters");
  if (counters.values.size() != 2)
    throw ShapeError("checkpoint record " + counters.name +
                     " must hold exactly two counters");
  restore_model(branch.model, records, prefix + "model.");
  if (branch.teacher)
    restore_model(*branch.teacher, records, prefix + "teacher.");
  std::vector<std::pair<std::string, std::vector<double>>> slots;
  for (const auto& [name, values] : branch.opt.state())
    slots.emplace_back(name,
                       find_record(records, prefix + "opt." + name).values);
  branch.opt.restore(to_count(counters.values[1], "optimizer steps"), slots);
  branch.step = to_count(counters.values[0], "branch steps");
}

}  // namespace ubpl
