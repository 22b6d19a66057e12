#include "subnet/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "subnet/util.hpp"

namespace subnet {

namespace {

constexpr char kMagic[8] = {'S', 'N', 'R', 'R', 'M', 'C', 'K', '1'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw RunAbort("checkpoint truncated");
    return v;
}

void put_str(std::ostream& out, const std::string& s) {
    put<uint32_t>(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& in) {
    auto n = get<uint32_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw RunAbort("checkpoint truncated");
    return s;
}

}  // namespace

void Checkpoint::append(const std::string& prefix, const std::vector<nn::Param*>& params) {
    for (const auto* p : params) tensors.emplace_back(prefix + p->name, p->value);
}

void Checkpoint::restore(const std::string& prefix, const std::vector<nn::Param*>& params) const {
    for (auto* p : params) {
        const auto* m = find(prefix + p->name);
        if (!m) throw RunAbort("checkpoint missing tensor: " + prefix + p->name);
        if (m->rows() != p->value.rows() || m->cols() != p->value.cols())
            throw RunAbort("checkpoint tensor shape mismatch: " + prefix + p->name);
        p->value = *m;
    }
}

const Eigen::MatrixXd* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, m] : tensors)
        if (n == name) return &m;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw RunAbort("cannot write checkpoint: " + path);

    out.write(kMagic, sizeof(kMagic));
    put<uint32_t>(out, kVersion);
    put<uint8_t>(out, static_cast<uint8_t>(ck.kind));
    put<uint64_t>(out, ck.env_fingerprint);
    put_str(out, ck.meta.dump());
    put<uint32_t>(out, static_cast<uint32_t>(ck.tensors.size()));
    for (const auto& [name, m] : ck.tensors) {
        put_str(out, name);
        put<uint32_t>(out, static_cast<uint32_t>(m.rows()));
        put<uint32_t>(out, static_cast<uint32_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(out, m(r, c));
    }
    if (!out) throw RunAbort("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RunAbort("cannot open checkpoint: " + path);

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw RunAbort("not a checkpoint file: " + path);
    auto version = get<uint32_t>(in);
    if (version != kVersion)
        throw RunAbort("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ck;
    ck.kind = static_cast<CheckpointKind>(get<uint8_t>(in));
    ck.env_fingerprint = get<uint64_t>(in);
    ck.meta = nlohmann::json::parse(get_str(in));
    auto n = get<uint32_t>(in);
    ck.tensors.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        std::string name = get_str(in);
        auto rows = get<uint32_t>(in);
        auto cols = get<uint32_t>(in);
        Eigen::MatrixXd m(rows, cols);
        for (uint32_t r = 0; r < rows; ++r)
            for (uint32_t c = 0; c < cols; ++c) m(r, c) = get<double>(in);
        ck.tensors.emplace_back(std::move(name), std::move(m));
    }
    return ck;
}

}  // namespace subnet
