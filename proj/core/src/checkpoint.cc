#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "adaptvc/error.h"
#include "adaptvc/training.h"

namespace adaptvc {
namespace {

constexpr char kMagic[8] = {'A', 'V', 'C', 'K', 'P', 'T', '\0', '\0'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    put<uint64_t>(s.size());
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<unsigned char> bytes;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}

  void need(size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw DataError("truncated checkpoint: expected at least " + std::to_string(pos_ + n) +
                      " bytes, got " + std::to_string(bytes_.size()));
    }
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<uint64_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  const unsigned char* take(size_t n) {
    need(n);
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  size_t pos() const { return pos_; }
  size_t size() const { return bytes_.size(); }

 private:
  std::vector<unsigned char> bytes_;
  size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const TrainState& state) {
  Writer w;
  w.bytes.insert(w.bytes.end(), kMagic, kMagic + 8);
  w.put<uint32_t>(kCheckpointVersion);
  w.put_string(model.config().to_json());
  w.put<int64_t>(state.step);
  w.put_string(state.rng_state);
  const auto& idle = model.content_encoder().idle_steps();
  w.put<uint64_t>(idle.size());
  for (int64_t v : idle) w.put<int64_t>(v);

  const auto params = model.params().all();
  w.put<uint32_t>(static_cast<uint32_t>(params.size()));
  for (const Parameter* p : params) {
    w.put_string(p->name);
    w.put<uint32_t>(static_cast<uint32_t>(p->value.rank()));
    for (int64_t d : p->value.shape()) w.put<int64_t>(d);
  }
  for (const Parameter* p : params) {
    const auto* raw = reinterpret_cast<const unsigned char*>(p->value.data());
    w.bytes.insert(w.bytes.end(), raw, raw + p->value.size() * sizeof(Scalar));
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(w.bytes.data()),
            static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  Reader r(std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>()));
  try {
    if (std::memcmp(r.take(8), kMagic, 8) != 0) throw DataError("not an adaptvc checkpoint");
    const auto version = r.get<uint32_t>();
    if (version != kCheckpointVersion) {
      throw DataError("checkpoint version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    ModelConfig config;
    try {
      config = ModelConfig::from_json(r.get_string());
    } catch (const UsageError& e) {
      throw DataError(std::string("checkpoint carries an invalid config: ") + e.what());
    }
    LoadedCheckpoint out;
    out.model = std::make_unique<Model>(config);
    out.state.step = r.get<int64_t>();
    out.state.rng_state = r.get_string();
    const auto idle_count = r.get<uint64_t>();
    std::vector<int64_t> idle(idle_count);
    for (auto& v : idle) v = r.get<int64_t>();

    ParameterStore& store = out.model->params();
    const auto count = r.get<uint32_t>();
    std::vector<Parameter*> order;
    std::set<std::string> seen;
    size_t payload = 0;
    for (uint32_t i = 0; i < count; ++i) {
      const std::string name = r.get_string();
      const auto rank = r.get<uint32_t>();
      Shape shape(rank);
      for (auto& d : shape) d = r.get<int64_t>();
      if (!store.contains(name)) throw DataError("unknown parameter '" + name + "' in checkpoint");
      Parameter& p = store.get(name);
      if (p.value.shape() != shape) {
        throw DataError("parameter '" + name + "' has shape " + shape_string(shape) +
                        ", model expects " + shape_string(p.value.shape()));
      }
      seen.insert(name);
      order.push_back(&p);
      payload += static_cast<size_t>(p.value.size()) * sizeof(Scalar);
    }
    for (const Parameter* p : store.all()) {
      if (!seen.count(p->name)) throw DataError("checkpoint lacks parameter '" + p->name + "'");
    }
    if (r.pos() + payload != r.size()) {
      throw DataError((r.pos() + payload > r.size() ? "truncated checkpoint: expected "
                                                     : "checkpoint has trailing data: expected ") +
                      std::to_string(r.pos() + payload) + " bytes, got " +
                      std::to_string(r.size()));
    }
    for (Parameter* p : order) {
      const size_t n = static_cast<size_t>(p->value.size()) * sizeof(Scalar);
      std::memcpy(p->value.data(), r.take(n), n);
    }
    out.model->content_encoder().set_idle_steps(std::move(idle));
    return out;
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace adaptvc
