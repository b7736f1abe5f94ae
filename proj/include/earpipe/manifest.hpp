#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "earpipe/core_types.hpp"

namespace earpipe {

/// Manifest document: {name, side_split, records: [{subject_id, side, stage, path, ...}]}.
/// Paths are written relative to `base` and resolved against it on read.
nlohmann::json manifest_to_json(const DatasetManifest& manifest, const std::filesystem::path& base);
DatasetManifest manifest_from_json(const nlohmann::json& doc, const std::filesystem::path& base);

DatasetManifest load_manifest(const std::filesystem::path& file);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);

/// Invariant violations, one message per problem; empty when the manifest is usable.
std::vector<std::string> validate_manifest(const DatasetManifest& manifest);

/// Non-fatal findings, e.g. records dropped because their side is unknown under side-splitting.
std::vector<std::string> manifest_warnings(const DatasetManifest& manifest);

/// Fill in missing record keys as "subject_id/<file stem>", suffixing duplicates with "#n".
void assign_record_keys(DatasetManifest& manifest);

}  // namespace earpipe
