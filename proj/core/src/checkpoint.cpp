#include "hyda/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "nlohmann/json.hpp"

using nlohmann::json;

namespace hyda {

namespace {

constexpr char kMagic[8] = {'H', 'Y', 'C', 'K', 'P', 'T', '1', '\n'};

json scaler_to_json(const FeatureScaler& s) {
    json out = json::object();
    for (const auto& [name, mm] : s.ranges) {
        out[name] = {{"min", mm.first}, {"max", mm.second}};
    }
    return out;
}

FeatureScaler scaler_from_json(const json& j) {
    FeatureScaler s;
    for (auto it = j.begin(); it != j.end(); ++it) {
        s.ranges[it.key()] = {it.value().at("min").get<std::vector<double>>(),
                              it.value().at("max").get<std::vector<double>>()};
    }
    return s;
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::ifstream& in, size_t n, const std::string& what) {
    std::vector<double> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw FormatError("checkpoint payload truncated while reading " + what);
    return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json header;
    header["config"] = ckpt.config.canonical();
    header["config_fingerprint"] = ckpt.config.fingerprint();
    header["data_fingerprint"] = ckpt.data_fingerprint;
    header["epoch"] = ckpt.epoch;
    header["fold_index"] = ckpt.fold_index;
    header["scaler"] = scaler_to_json(ckpt.scaler);
    header["opt_step"] = ckpt.opt_step;
    json tensors = json::array();
    for (const auto& it : ckpt.params.items()) {
        json jt;
        jt["name"] = it.name;
        jt["shape"] = it.value->shape;
        jt["group"] = it.group == DecayGroup::hypergraph ? "hypergraph" : "other";
        jt["has_moments"] = ckpt.opt_m.count(it.name) > 0;
        tensors.push_back(jt);
    }
    header["tensors"] = tensors;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write checkpoint " + path);
    out.write(kMagic, sizeof(kMagic));
    const uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& it : ckpt.params.items()) {
        write_doubles(out, it.value->data);
        if (ckpt.opt_m.count(it.name)) {
            write_doubles(out, ckpt.opt_m.at(it.name));
            write_doubles(out, ckpt.opt_v.at(it.name));
        }
    }
    if (!out) throw FormatError("short write to checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read checkpoint " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("not a checkpoint file: " + path);
    }
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in) throw FormatError("checkpoint header truncated: " + path);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw FormatError("checkpoint header truncated: " + path);

    Checkpoint ckpt;
    try {
        const json header = json::parse(hs);
        ckpt.config = parse_config_text(header.at("config").get<std::string>(), path);
        const uint64_t want_fp = header.at("config_fingerprint").get<uint64_t>();
        if (ckpt.config.fingerprint() != want_fp) {
            throw FormatError("checkpoint config fingerprint mismatch in " + path);
        }
        ckpt.data_fingerprint = header.at("data_fingerprint").get<uint64_t>();
        ckpt.epoch = header.at("epoch").get<int64_t>();
        ckpt.fold_index = header.at("fold_index").get<int64_t>();
        ckpt.scaler = scaler_from_json(header.at("scaler"));
        ckpt.opt_step = header.at("opt_step").get<int64_t>();
        for (const auto& jt : header.at("tensors")) {
            const std::string name = jt.at("name").get<std::string>();
            const Shape shape = jt.at("shape").get<Shape>();
            const DecayGroup group = jt.at("group").get<std::string>() == "hypergraph"
                                         ? DecayGroup::hypergraph
                                         : DecayGroup::other;
            const size_t n = static_cast<size_t>(shape_numel(shape));
            auto data = read_doubles(in, n, "tensor " + name);
            ckpt.params.add(name, Tensor::create(shape, std::move(data), true), group);
            if (jt.at("has_moments").get<bool>()) {
                ckpt.opt_m[name] = read_doubles(in, n, "moment m of " + name);
                ckpt.opt_v[name] = read_doubles(in, n, "moment v of " + name);
            }
        }
    } catch (const json::exception& e) {
        throw FormatError("checkpoint header malformed in " + path + ": " + e.what());
    }
    return ckpt;
}

}  // namespace hyda
