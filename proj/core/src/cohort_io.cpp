#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "hyda/cohort.hpp"
#include "nlohmann/json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hyda {

namespace {

std::vector<unsigned char> to_f32le(const Tensor& t) {
    std::vector<unsigned char> bytes(t.data.size() * 4);
    for (size_t i = 0; i < t.data.size(); ++i) {
        const float f = static_cast<float>(t.data[i]);
        std::memcpy(&bytes[i * 4], &f, 4);
    }
    return bytes;
}

uint32_t crc_of(const std::vector<unsigned char>& bytes) {
    return static_cast<uint32_t>(
        ::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

void write_file(const fs::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + path.string());
}

std::vector<unsigned char> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw FormatError("cannot read " + path.string());
    const auto size = in.tellg();
    in.seekg(0);
    std::vector<unsigned char> bytes(static_cast<size_t>(size));
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw FormatError("short read from " + path.string());
    return bytes;
}

TensorPtr tensor_from_f32le(const std::vector<unsigned char>& bytes, Shape shape,
                            const std::string& entry) {
    const int64_t n = shape_numel(shape);
    if (static_cast<int64_t>(bytes.size()) != 4 * n) {
        throw FormatError("tensor file " + entry + " has " + std::to_string(bytes.size()) +
                          " bytes, expected " + std::to_string(4 * n));
    }
    std::vector<double> data(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, &bytes[static_cast<size_t>(i) * 4], 4);
        data[static_cast<size_t>(i)] = static_cast<double>(f);
    }
    return Tensor::create(std::move(shape), std::move(data));
}

char hex_digit(uint32_t v) { return v < 10 ? char('0' + v) : char('a' + v - 10); }

std::string crc_hex(uint32_t crc) {
    std::string s(8, '0');
    for (int i = 7; i >= 0; --i) {
        s[static_cast<size_t>(i)] = hex_digit(crc & 0xF);
        crc >>= 4;
    }
    return s;
}

}  // namespace

void save_cohort(const CohortDataset& ds, const std::string& dir) {
    ds.validate();
    fs::create_directories(dir);
    json manifest;
    manifest["format_version"] = "HYC1";
    manifest["N"] = ds.subject_count();
    manifest["K"] = ds.num_classes;
    json mods = json::array();
    for (const auto& m : ds.modalities) {
        json jm;
        jm["name"] = m.name;
        jm["kind"] = m.kind == ModalityKind::imaging ? "imaging" : "tabular";
        jm["emb_dim"] = m.emb_dim;
        jm["dtype"] = "f32le";
        if (m.kind == ModalityKind::imaging) {
            jm["map_shape"] = m.map_shape;
        } else {
            jm["raw_dim"] = m.raw_dim;
        }
        mods.push_back(jm);
    }
    manifest["modalities"] = mods;

    json subjects = json::array();
    for (const auto& s : ds.subjects) {
        json js;
        js["id"] = s.subject_id;
        js["label"] = s.label;
        json files = json::array();
        auto emit = [&](const std::string& modality, const std::string& role, const Tensor& t) {
            const std::string rel = s.subject_id + "_" + modality + "_" + role + ".bin";
            const auto bytes = to_f32le(t);
            write_file(fs::path(dir) / rel, bytes);
            json jf;
            jf["modality"] = modality;
            jf["role"] = role;
            jf["path"] = rel;
            jf["bytes"] = bytes.size();
            jf["crc32"] = crc_hex(crc_of(bytes));
            files.push_back(jf);
        };
        for (const auto& m : ds.modalities) {
            if (m.kind == ModalityKind::imaging) {
                emit(m.name, "embedding", *s.embeddings.at(m.name));
                emit(m.name, "feature_map", *s.feature_maps.at(m.name));
            } else {
                emit(m.name, "tabular", *s.tabular);
            }
        }
        js["files"] = files;
        subjects.push_back(js);
    }
    manifest["subjects"] = subjects;

    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw FormatError("cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

CohortDataset load_cohort(const std::string& dir) {
    const fs::path mpath = fs::path(dir) / "manifest.json";
    std::ifstream in(mpath);
    if (!in) throw FormatError("missing manifest: " + mpath.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw FormatError("manifest parse error in " + mpath.string() + ": " + e.what());
    }
    if (manifest.value("format_version", "") != "HYC1") {
        throw FormatError("unsupported cohort format_version in " + mpath.string());
    }

    CohortDataset ds;
    try {
        ds.num_classes = manifest.at("K").get<int64_t>();
        for (const auto& jm : manifest.at("modalities")) {
            ModalityDesc m;
            m.name = jm.at("name").get<std::string>();
            const std::string kind = jm.at("kind").get<std::string>();
            if (kind == "imaging") {
                m.kind = ModalityKind::imaging;
                m.map_shape = jm.at("map_shape").get<Shape>();
            } else if (kind == "tabular") {
                m.kind = ModalityKind::tabular;
                m.raw_dim = jm.at("raw_dim").get<int64_t>();
            } else {
                throw FormatError("unknown modality kind '" + kind + "'");
            }
            m.emb_dim = jm.at("emb_dim").get<int64_t>();
            if (jm.value("dtype", "f32le") != "f32le") {
                throw FormatError("modality " + m.name + ": unsupported dtype");
            }
            ds.modalities.push_back(m);
        }

        for (const auto& js : manifest.at("subjects")) {
            SubjectRecord rec;
            rec.subject_id = js.at("id").get<std::string>();
            rec.label = js.at("label").get<int64_t>();
            for (const auto& jf : js.at("files")) {
                const std::string modality = jf.at("modality").get<std::string>();
                const std::string role = jf.at("role").get<std::string>();
                const std::string rel = jf.at("path").get<std::string>();
                const ModalityDesc* md = ds.find_modality(modality);
                if (!md) throw FormatError("file entry references unknown modality " + modality);
                const auto bytes = read_file(fs::path(dir) / rel);
                if (jf.contains("bytes") &&
                    jf.at("bytes").get<uint64_t>() != bytes.size()) {
                    throw FormatError("length mismatch for " + rel);
                }
                if (jf.contains("crc32") &&
                    jf.at("crc32").get<std::string>() != crc_hex(crc_of(bytes))) {
                    throw FormatError("checksum mismatch for " + rel);
                }
                if (role == "embedding") {
                    rec.embeddings[modality] = tensor_from_f32le(bytes, {md->emb_dim}, rel);
                } else if (role == "feature_map") {
                    auto fmap = tensor_from_f32le(bytes, md->map_shape, rel);
                    fmap->frozen = true;
                    rec.feature_maps[modality] = fmap;
                } else if (role == "tabular") {
                    rec.tabular = tensor_from_f32le(bytes, {md->raw_dim}, rel);
                } else {
                    throw FormatError("unknown file role '" + role + "' for " + rel);
                }
            }
            ds.subjects.push_back(std::move(rec));
        }
        if (manifest.at("N").get<int64_t>() != ds.subject_count()) {
            throw FormatError("manifest N does not match subject table");
        }
    } catch (const json::exception& e) {
        throw FormatError("manifest structure error: " + std::string(e.what()));
    }
    ds.validate();
    return ds;
}

}  // namespace hyda
