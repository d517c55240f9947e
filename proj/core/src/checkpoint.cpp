#include "cdaae/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace cdaae {

namespace {

constexpr char kMagic[8] = {'C', 'D', 'A', 'A', 'E', 'C', 'K', 'P'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t checked_u32(std::size_t v, const char* what)
{
    if (v > 0xffffffffu) throw CheckpointError(std::string(what) + " does not fit in 32 bits");
    return static_cast<std::uint32_t>(v);
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint32_t u32(const char* what)
    {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::string text(std::size_t n, const char* what)
    {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    float f32()
    {
        return std::bit_cast<float>(u32("tensor data"));
    }

    void need(std::size_t n, const char* what) const
    {
        if (bytes_.size() - pos_ < n)
            throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_) + " while reading " + what);
    }

    bool done() const { return pos_ == bytes_.size(); }
    std::size_t pos() const { return pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

const CheckpointTensor* Checkpoint::find(std::string_view name) const
{
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

const CheckpointTensor& Checkpoint::at(std::string_view name) const
{
    if (auto* t = find(name)) return *t;
    throw CheckpointError("checkpoint has no tensor '" + std::string(name) + "'");
}

void Checkpoint::add(std::string name, Shape shape, std::vector<float> data)
{
    if (element_count(shape) != data.size())
        throw CheckpointError("tensor '" + name + "' has " + std::to_string(data.size()) + " values for shape " +
                              to_string(shape));
    if (find(name)) throw CheckpointError("duplicate checkpoint tensor '" + name + "'");
    tensors.push_back({std::move(name), std::move(shape), std::move(data)});
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt)
{
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u32(out, Checkpoint::kVersion);
    put_u32(out, checked_u32(ckpt.metadata.size(), "metadata length"));
    out.insert(out.end(), ckpt.metadata.begin(), ckpt.metadata.end());
    put_u32(out, checked_u32(ckpt.tensors.size(), "tensor count"));
    for (const auto& t : ckpt.tensors) {
        put_u32(out, checked_u32(t.name.size(), "tensor name length"));
        out.insert(out.end(), t.name.begin(), t.name.end());
        put_u32(out, checked_u32(t.shape.size(), "tensor rank"));
        for (auto d : t.shape) put_u32(out, checked_u32(d, "tensor dimension"));
        for (float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes)
{
    Reader in(bytes);
    if (in.text(sizeof kMagic, "magic") != std::string(kMagic, sizeof kMagic))
        throw CheckpointError("not a checkpoint file (bad magic)");
    const auto version = in.u32("version");
    if (version != Checkpoint::kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.metadata = in.text(in.u32("metadata length"), "metadata");
    const auto count = in.u32("tensor count");
    for (std::uint32_t k = 0; k < count; ++k) {
        CheckpointTensor t;
        t.name = in.text(in.u32("tensor name length"), "tensor name");
        const auto rank = in.u32("tensor rank");
        for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(in.u32("tensor dimension"));
        const auto n = element_count(t.shape);
        in.need(n * 4, "tensor data");
        t.data.resize(n);
        for (auto& v : t.data) v = in.f32();
        ckpt.tensors.push_back(std::move(t));
    }
    if (!in.done()) throw CheckpointError("trailing bytes after checkpoint at byte " + std::to_string(in.pos()));
    return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    const auto bytes = serialize_checkpoint(ckpt);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

void store_tensors(Checkpoint& ckpt, const std::string& prefix,
                   const std::vector<std::pair<std::string, Tensor>>& entries)
{
    for (const auto& [name, t] : entries)
        ckpt.add(prefix + name, t.shape(), std::vector<float>(t.values().begin(), t.values().end()));
}

void load_tensors(const Checkpoint& ckpt, const std::string& prefix,
                  const std::vector<std::pair<std::string, Tensor>>& entries)
{
    for (const auto& [name, t] : entries) {
        const auto& stored = ckpt.at(prefix + name);
        if (stored.shape != t.shape())
            throw CheckpointError("tensor '" + prefix + name + "' has shape " + to_string(stored.shape) +
                                  ", expected " + to_string(t.shape()));
        auto target = t;
        std::copy(stored.data.begin(), stored.data.end(), target.mutable_values().begin());
    }
}

void store_optimizer(Checkpoint& ckpt, const std::string& group, const Adam<float>& opt)
{
    const auto state = opt.state();
    const auto& params = opt.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto& [name, p] = params[k];
        ckpt.add("opt/" + group + "/m/" + name, p.shape(), state.first_moment[k]);
        ckpt.add("opt/" + group + "/v/" + name, p.shape(), state.second_moment[k]);
    }
}

void load_optimizer(const Checkpoint& ckpt, const std::string& group, Adam<float>& opt, std::uint64_t steps)
{
    OptimizerState state;
    state.step = steps;
    for (const auto& [name, p] : opt.parameters()) {
        state.first_moment.push_back(ckpt.at("opt/" + group + "/m/" + name).data);
        state.second_moment.push_back(ckpt.at("opt/" + group + "/v/" + name).data);
    }
    opt.restore(state);
}

} // namespace cdaae
