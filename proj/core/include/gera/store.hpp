#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gera/common.hpp"

namespace gera::store {

namespace fs = std::filesystem;

// Root of an engine store. All paths below it are fixed layout:
//   raw/<source_id>/<as_of>/batch-<hash>.ndjson  raw/MANIFEST.json
//   staged/<entity_kind>/<as_of>/records.ndjson  staged/META/<as_of>.json
//   quarantine/<as_of>/records.ndjson
//   recon/exceptions.ndjson  recon/STATE.json
//   inventory/snapshots/<date>.ndjson  inventory/lots/<date>.ndjson  inventory/flags.ndjson
//   audit/log.ndjson  audit/MANIFEST.json
//   config/*.json  config/crosswalks/*.json  metrics/*.metric
//   reports/<as_of>/*
class StoreRoot {
public:
    explicit StoreRoot(fs::path root) : root_(std::move(root)) {}

    const fs::path& path() const { return root_; }

    fs::path raw_dir() const { return root_ / "raw"; }
    fs::path raw_partition(const std::string& source_id, Date as_of) const {
        return raw_dir() / source_id / as_of.to_string();
    }
    fs::path raw_manifest() const { return raw_dir() / "MANIFEST.json"; }

    fs::path staged_dir() const { return root_ / "staged"; }
    fs::path staged_partition(const std::string& entity_kind, Date as_of) const {
        return staged_dir() / entity_kind / as_of.to_string() / "records.ndjson";
    }
    fs::path staged_meta(Date as_of) const {
        return staged_dir() / "META" / (as_of.to_string() + ".json");
    }
    fs::path quarantine_partition(Date as_of) const {
        return root_ / "quarantine" / as_of.to_string() / "records.ndjson";
    }

    fs::path recon_dir() const { return root_ / "recon"; }
    fs::path exceptions_log() const { return recon_dir() / "exceptions.ndjson"; }
    fs::path pipeline_state() const { return recon_dir() / "STATE.json"; }

    fs::path inventory_dir() const { return root_ / "inventory"; }
    fs::path snapshot_file(Date d) const {
        return inventory_dir() / "snapshots" / (d.to_string() + ".ndjson");
    }
    fs::path lots_file(Date d) const {
        return inventory_dir() / "lots" / (d.to_string() + ".ndjson");
    }
    fs::path flags_log() const { return inventory_dir() / "flags.ndjson"; }

    fs::path audit_dir() const { return root_ / "audit"; }
    fs::path audit_log() const { return audit_dir() / "log.ndjson"; }
    fs::path audit_manifest() const { return audit_dir() / "MANIFEST.json"; }

    fs::path config_dir() const { return root_ / "config"; }
    fs::path metrics_dir() const { return root_ / "metrics"; }
    fs::path reports_dir(Date as_of) const { return root_ / "reports" / as_of.to_string(); }

    fs::path lock_file() const { return root_ / ".lock"; }

private:
    fs::path root_;
};

// Whole-file helpers. Writes go through a temp file and rename so that a
// crash never leaves a half-written store file.
std::string read_file(const fs::path& p);
std::optional<std::string> read_file_if_exists(const fs::path& p);
void write_file_atomic(const fs::path& p, std::string_view content);
void append_line(const fs::path& p, std::string_view line);  // creates parents, flushes

std::vector<Json> read_ndjson(const fs::path& p);  // empty vector when file absent
void write_ndjson_atomic(const fs::path& p, const std::vector<Json>& rows);

Json read_json(const fs::path& p);
void write_json_atomic(const fs::path& p, const Json& v);  // pretty, trailing newline

// Advisory exclusive lock via flock(2). Blocks while another holder exists
// unless try_only, in which case acquisition failure throws ValidationError.
class FileLock {
public:
    FileLock(const fs::path& p, bool try_only = false);
    ~FileLock();
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
};

}  // namespace gera::store
