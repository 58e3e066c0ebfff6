#pragma once

#include "ctalvae/flow.hpp"
#include "ctalvae/vae.hpp"

#include <iosfwd>
#include <map>
#include <string>

namespace ctalvae {

struct DomainEntry {
    int dim = 0;      // raw feature dimension of this domain
    Normalizer norm;  // fitted on that domain's training flows
};

/// A trained model: the shared core, per-domain adaptor pairs (inside
/// `params` under groups "adaptor.<domain>"), and per-domain normalizers,
/// so scoring needs nothing beyond the bundle itself.
struct ModelBundle {
    int version = 1;
    CoreConfig core;
    ParameterStore params;
    std::map<std::string, DomainEntry> domains;

    bool has_domain(const std::string& name) const {
        return domains.count(name) != 0;
    }
};

/// Binary container: magic "CTALVAE1", u32-LE length-prefixed JSON header
/// (version, core config, domains, array directory with name/shape/offset
/// sorted by name), then raw little-endian float32 arrays in directory
/// order, column-major. Round-trips losslessly at 32-bit precision.
void save_bundle(const ModelBundle& bundle, std::ostream& out);
void save_bundle(const ModelBundle& bundle, const std::string& path);

ModelBundle load_bundle(std::istream& in);
ModelBundle load_bundle(const std::string& path);

/// The float32 payload bytes of every array in `group`, in name order.
/// Byte-equality of this string is the freeze criterion for that group.
std::string serialize_group_bytes(const ParameterStore& ps,
                                  const std::string& group);

}  // namespace ctalvae
