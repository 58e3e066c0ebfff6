#include "ctalvae/bundle.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace ctalvae {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'A', 'L', 'V', 'A', 'E', '1'};

void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32_le(std::string& out, float f) {
    const auto v = std::bit_cast<std::uint32_t>(f);
    put_u32_le(out, v);
}

std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

float get_f32_le(const unsigned char* p) {
    return std::bit_cast<float>(get_u32_le(p));
}

std::string matrix_bytes(const Mat& m) {
    std::string out;
    out.reserve(static_cast<std::size_t>(m.size()) * 4);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            put_f32_le(out, static_cast<float>(m(i, j)));
    return out;
}

struct DirEntry {
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    const Mat* source = nullptr;  // save path only
};

std::string norm_mean_name(const std::string& d) { return "norm." + d + "/mean"; }
std::string norm_std_name(const std::string& d) { return "norm." + d + "/std"; }

}  // namespace

void save_bundle(const ModelBundle& bundle, std::ostream& out) {
    std::vector<DirEntry> dir;
    std::vector<Mat> norm_mats;  // keeps Vec->Mat copies alive for `source`
    norm_mats.reserve(bundle.domains.size() * 2);

    for (const auto& [name, p] : bundle.params.entries())
        dir.push_back({name, p.value.rows(), p.value.cols(), &p.value});
    for (const auto& [dname, entry] : bundle.domains) {
        norm_mats.emplace_back(entry.norm.mean);
        dir.push_back({norm_mean_name(dname), norm_mats.back().rows(), 1,
                       &norm_mats.back()});
        norm_mats.emplace_back(entry.norm.std);
        dir.push_back({norm_std_name(dname), norm_mats.back().rows(), 1,
                       &norm_mats.back()});
    }
    std::sort(dir.begin(), dir.end(),
              [](const DirEntry& a, const DirEntry& b) { return a.name < b.name; });

    nlohmann::json header;
    header["version"] = bundle.version;
    header["core"] = {{"core_dim", bundle.core.core_dim},
                      {"hidden", bundle.core.hidden},
                      {"latent", bundle.core.latent},
                      {"seq_len", bundle.core.seq_len}};
    header["domains"] = nlohmann::json::object();
    for (const auto& [dname, entry] : bundle.domains)
        header["domains"][dname] = {{"dim", entry.dim}};
    header["arrays"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& e : dir) {
        header["arrays"].push_back({{"name", e.name},
                                    {"rows", e.rows},
                                    {"cols", e.cols},
                                    {"offset", offset}});
        offset += static_cast<std::uint64_t>(e.rows) * e.cols * 4;
    }

    const std::string header_str = header.dump();
    std::string blob;
    blob.append(kMagic, sizeof(kMagic));
    put_u32_le(blob, static_cast<std::uint32_t>(header_str.size()));
    blob += header_str;
    for (const auto& e : dir) blob += matrix_bytes(*e.source);

    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataError("failed to write checkpoint");
}

void save_bundle(const ModelBundle& bundle, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    save_bundle(bundle, f);
}

ModelBundle load_bundle(std::istream& in) {
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string blob = buf.str();
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());

    if (blob.size() < sizeof(kMagic) + 4 ||
        std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0)
        throw DataError("not a model checkpoint (bad magic)");
    const std::uint32_t header_len = get_u32_le(bytes + sizeof(kMagic));
    const std::size_t header_start = sizeof(kMagic) + 4;
    if (blob.size() < header_start + header_len)
        throw DataError("truncated checkpoint header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(blob.substr(header_start, header_len));
    } catch (const nlohmann::json::exception&) {
        throw DataError("checkpoint header is not valid JSON");
    }

    ModelBundle bundle;
    try {
        bundle.version = header.at("version").get<int>();
        if (bundle.version != 1)
            throw DataError("unsupported checkpoint version " +
                            std::to_string(bundle.version));
        const auto& core = header.at("core");
        bundle.core.core_dim = core.at("core_dim").get<int>();
        bundle.core.hidden = core.at("hidden").get<int>();
        bundle.core.latent = core.at("latent").get<int>();
        bundle.core.seq_len = core.at("seq_len").get<int>();
        bundle.core.validate();

        for (const auto& [dname, dj] : header.at("domains").items())
            bundle.domains[dname].dim = dj.at("dim").get<int>();

        const std::size_t payload_start = header_start + header_len;
        for (const auto& aj : header.at("arrays")) {
            const auto name = aj.at("name").get<std::string>();
            const auto rows = aj.at("rows").get<Eigen::Index>();
            const auto cols = aj.at("cols").get<Eigen::Index>();
            const auto offset = aj.at("offset").get<std::uint64_t>();
            if (rows <= 0 || cols <= 0)
                throw DataError("checkpoint array '" + name + "' has bad shape");
            const std::uint64_t nbytes =
                static_cast<std::uint64_t>(rows) * cols * 4;
            if (payload_start + offset + nbytes > blob.size())
                throw DataError("checkpoint array '" + name +
                                "' extends past end of file");

            Mat m(rows, cols);
            const unsigned char* p = bytes + payload_start + offset;
            for (Eigen::Index j = 0; j < cols; ++j)
                for (Eigen::Index i = 0; i < rows; ++i, p += 4)
                    m(i, j) = static_cast<double>(get_f32_le(p));

            if (name.rfind("norm.", 0) == 0) {
                const auto slash = name.find('/');
                if (slash == std::string::npos)
                    throw DataError("malformed normalizer array name '" + name +
                                    "'");
                const std::string dname = name.substr(5, slash - 5);
                const std::string field = name.substr(slash + 1);
                auto it = bundle.domains.find(dname);
                if (it == bundle.domains.end())
                    throw DataError("normalizer for unknown domain '" + dname +
                                    "'");
                if (field == "mean")
                    it->second.norm.mean = m.col(0);
                else if (field == "std")
                    it->second.norm.std = m.col(0);
                else
                    throw DataError("malformed normalizer array name '" + name +
                                    "'");
            } else {
                bundle.params.create(name, rows, cols).value = m;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint header: ") + e.what());
    }

    for (const auto& [dname, entry] : bundle.domains) {
        if (entry.norm.mean.size() != entry.dim ||
            entry.norm.std.size() != entry.dim)
            throw DataError("domain '" + dname +
                            "' normalizer missing or wrong size");
    }
    return bundle;
}

ModelBundle load_bundle(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint '" + path + "'");
    return load_bundle(f);
}

std::string serialize_group_bytes(const ParameterStore& ps,
                                  const std::string& group) {
    std::string out;
    for (const auto& name : ps.names())
        if (ParameterStore::group_of(name) == group)
            out += matrix_bytes(ps.at(name).value);
    return out;
}

}  // namespace ctalvae
