#include "saft/nn/param_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "saft/errors.hpp"

namespace saft::nn {

Matrix& ParamStore::add(const std::string& name, Matrix init) {
  if (contains(name)) throw NumericError("parameter '" + name + "' already registered");
  Entry e;
  e.name = name;
  e.grad = Matrix::Zero(init.rows(), init.cols());
  e.m = Matrix::Zero(init.rows(), init.cols());
  e.v = Matrix::Zero(init.rows(), init.cols());
  e.value = std::move(init);
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
  return entries_.back().value;
}

std::size_t ParamStore::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw NumericError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.setZero();
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.size() != size()) throw NumericError("parameter stores differ in layout");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name)
      throw NumericError("parameter stores differ at '" + entries_[i].name + "'");
    entries_[i].value = other.entries_[i].value;
  }
}

void adam_step(ParamStore& store, double lr, double beta1, double beta2, double eps) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& e = store.entry(i);
    if (!e.grad.allFinite())
      throw NumericError("non-finite gradient in tensor '" + e.name + "'; step refused");
  }
  store.set_step(store.step() + 1);
  const auto t = static_cast<double>(store.step());
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& e = store.entry(i);
    e.m = beta1 * e.m + (1.0 - beta1) * e.grad;
    e.v = beta2 * e.v + (1.0 - beta2) * e.grad.cwiseProduct(e.grad);
    e.value.array() -= lr * (e.m.array() / c1) / ((e.v.array() / c2).sqrt() + eps);
  }
}

namespace {

void write_blob(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (Index i = 0; i < m.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(m.data()[i]);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

Matrix read_blob(const std::filesystem::path& path, Index rows, Index cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path.string() + "'");
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8))
      throw Error("truncated tensor blob '" + path.string() + "'");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    m.data()[i] = std::bit_cast<double>(bits);
  }
  return m;
}

std::string blob_stem(std::size_t i, const std::string& name) {
  std::ostringstream s;
  s << std::setw(3) << std::setfill('0') << i << '_' << name;
  return s.str();
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "saft-params-v1";
  manifest["step"] = store.step();
  manifest["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& e = store.entry(i);
    const auto stem = blob_stem(i, e.name);
    write_blob(dir / (stem + ".bin"), e.value);
    write_blob(dir / (stem + ".adam_m.bin"), e.m);
    write_blob(dir / (stem + ".adam_v.bin"), e.v);
    manifest["tensors"].push_back(
        {{"name", e.name}, {"rows", e.value.rows()}, {"cols", e.value.cols()}, {"file", stem + ".bin"}});
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

ParamStore load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error("no checkpoint manifest in '" + dir.string() + "'");
  nlohmann::json manifest;
  in >> manifest;
  ParamStore store;
  std::size_t i = 0;
  for (const auto& t : manifest.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto rows = t.at("rows").get<Index>();
    const auto cols = t.at("cols").get<Index>();
    const auto stem = blob_stem(i++, name);
    store.add(name, read_blob(dir / (stem + ".bin"), rows, cols));
    auto& e = store.entry(store.size() - 1);
    if (std::filesystem::exists(dir / (stem + ".adam_m.bin"))) {
      e.m = read_blob(dir / (stem + ".adam_m.bin"), rows, cols);
      e.v = read_blob(dir / (stem + ".adam_v.bin"), rows, cols);
    }
  }
  store.set_step(manifest.at("step").get<std::int64_t>());
  return store;
}

Matrix uniform(Index rows, Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix glorot_uniform(Index rows, Index cols, std::mt19937_64& rng) {
  return uniform(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng);
}

}  // namespace saft::nn
