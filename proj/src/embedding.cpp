#include "earpipe/embedding.hpp"

#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "earpipe/hashing.hpp"
#include "earpipe/image_io.hpp"
#include "earpipe/parallel.hpp"

namespace earpipe {

namespace fs = std::filesystem;

namespace {

std::uint32_t to_little_endian(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
    }
}

}  // namespace

std::string_view to_string(ModelFamily f) {
    switch (f) {
        case ModelFamily::ViT_T: return "ViT_T";
        case ModelFamily::ViT_S: return "ViT_S";
        case ModelFamily::ViT_B: return "ViT_B";
        case ModelFamily::ViT_L: return "ViT_L";
        case ModelFamily::mock: return "mock";
    }
    return "mock";
}

ModelFamily model_family_from_string(std::string_view s) {
    for (auto f : {ModelFamily::ViT_T, ModelFamily::ViT_S, ModelFamily::ViT_B, ModelFamily::ViT_L,
                   ModelFamily::mock}) {
        if (s == to_string(f)) return f;
    }
    throw ConfigError("unknown model family '" + std::string(s) + "'");
}

std::string BackendDescriptor::tag() const {
    return std::string(to_string(family)) + "_p" + std::to_string(patch_size);
}

BackendDescriptor BackendDescriptor::from_tag(std::string_view tag) {
    const auto pos = tag.rfind("_p");
    if (pos == std::string_view::npos) throw ConfigError("bad backend tag '" + std::string(tag) + "'");
    BackendDescriptor d;
    d.family = model_family_from_string(tag.substr(0, pos));
    try {
        d.patch_size = std::stoi(std::string(tag.substr(pos + 2)));
    } catch (const std::exception&) {
        throw ConfigError("bad patch size in backend tag '" + std::string(tag) + "'");
    }
    return d;
}

EmbeddingCache::EmbeddingCache(fs::path dir, BackendDescriptor descriptor)
    : dir_(std::move(dir)), descriptor_(descriptor) {
    if (!fs::exists(index_file()) || !fs::exists(data_file())) return;

    nlohmann::json idx;
    std::ifstream(index_file()) >> idx;
    std::ifstream data(data_file(), std::ios::binary);
    for (const auto& [key, entry] : idx.at("entries").items()) {
        Entry e{entry.at("hash").get<std::string>(), EmbeddingVector::Zero()};
        data.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
        for (int i = 0; i < kEmbeddingDim; ++i) {
            std::uint32_t raw = 0;
            data.read(reinterpret_cast<char*>(&raw), sizeof raw);
            e.vector(i) = std::bit_cast<float>(to_little_endian(raw));
        }
        if (!data) throw EmbeddingError("truncated embedding cache " + data_file().string());
        entries_.emplace(key, std::move(e));
    }
}

fs::path EmbeddingCache::data_file() const { return dir_ / (descriptor_.tag() + ".emb"); }
fs::path EmbeddingCache::index_file() const { return dir_ / (descriptor_.tag() + ".idx.json"); }

std::size_t EmbeddingCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::optional<EmbeddingVector> EmbeddingCache::find(const std::string& key,
                                                    const std::string& content_hash) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end() || it->second.hash != content_hash) return std::nullopt;
    return it->second.vector;
}

void EmbeddingCache::put(const std::string& key, const std::string& content_hash,
                         const EmbeddingVector& vector) {
    std::lock_guard lock(mutex_);
    entries_.insert_or_assign(key, Entry{content_hash, vector});
}

void EmbeddingCache::flush() const {
    std::lock_guard lock(mutex_);
    fs::create_directories(dir_);
    const fs::path tmp_data = data_file().string() + ".tmp";
    const fs::path tmp_idx = index_file().string() + ".tmp";

    nlohmann::json entries = nlohmann::json::object();
    {
        std::ofstream data(tmp_data, std::ios::binary | std::ios::trunc);
        std::uint64_t offset = 0;
        for (const auto& [key, e] : entries_) {
            for (int i = 0; i < kEmbeddingDim; ++i) {
                const std::uint32_t raw = to_little_endian(std::bit_cast<std::uint32_t>(e.vector(i)));
                data.write(reinterpret_cast<const char*>(&raw), sizeof raw);
            }
            entries[key] = {{"offset", offset}, {"hash", e.hash}};
            offset += kEmbeddingDim * sizeof(float);
        }
        if (!data) throw IoError("cannot write " + tmp_data.string());
    }
    {
        std::ofstream idx(tmp_idx, std::ios::trunc);
        idx << nlohmann::json{{"backend", descriptor_.tag()},
                              {"dim", kEmbeddingDim},
                              {"dtype", "float32le"},
                              {"entries", entries}}
                   .dump(2)
            << '\n';
        if (!idx) throw IoError("cannot write " + tmp_idx.string());
    }
    fs::rename(tmp_data, data_file());
    fs::rename(tmp_idx, index_file());
}

EmbeddingTable embed_manifest(const DatasetManifest& manifest,
                              const std::function<std::unique_ptr<EmbedderBackend>()>& make_backend,
                              EmbeddingCache* cache, int workers, EmbedStats* stats) {
    const auto n = manifest.records.size();
    std::vector<std::optional<Embedding>> slots(n);
    std::atomic<std::size_t> computed{0}, cached{0};

    parallel_for(n, workers, make_backend, [&](std::unique_ptr<EmbedderBackend>& backend,
                                               std::size_t i) {
        const auto& record = manifest.records[i];
        const fs::path file = manifest.resolve(record.path);
        std::string hash;
        if (cache) {
            hash = sha256_file(file);
            if (auto hit = cache->find(record.key, hash)) {
                slots[i] = Embedding{*hit, record.key};
                ++cached;
                return;
            }
        }
        Image image = read_png(file);
        if (image.width() != kEmbedderInputSize || image.height() != kEmbedderInputSize) {
            throw EmbeddingError("record '" + record.key + "' is " + std::to_string(image.width()) +
                                 "x" + std::to_string(image.height()) + ", expected 112x112");
        }
        Embedding e{backend->embed(to_three_channel(image)), record.key};
        e.check();
        if (cache) cache->put(record.key, hash, e.vector);
        slots[i] = std::move(e);
        ++computed;
    });

    EmbeddingTable table;
    for (auto& s : slots) table.emplace(s->record_key, std::move(*s));
    if (cache && computed > 0) cache->flush();
    if (stats) {
        stats->computed = computed;
        stats->cached = cached;
    }
    return table;
}

DatasetManifest split_by_side(const DatasetManifest& manifest, SideClassifierBackend& classifier) {
    DatasetManifest out = manifest;
    out.side_split = true;
    for (auto& r : out.records) {
        if (r.side != Side::unknown) continue;
        try {
            r.side = classifier.classify(read_png(manifest.resolve(r.path)));
        } catch (const std::exception& e) {
            throw SideSplitError("record '" + r.key + "': classifier '" + classifier.name() +
                                 "' failed: " + e.what());
        }
        if (r.side == Side::unknown) {
            throw SideSplitError("record '" + r.key + "': classifier returned no side");
        }
    }
    return out;
}

}  // namespace earpipe
