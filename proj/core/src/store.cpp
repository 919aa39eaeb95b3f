#include "gera/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

namespace gera::store {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in.good()) throw ValidationError("cannot open file: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::optional<std::string> read_file_if_exists(const fs::path& p) {
    std::error_code ec;
    if (!fs::exists(p, ec)) return std::nullopt;
    return read_file(p);
}

void write_file_atomic(const fs::path& p, std::string_view content) {
    fs::create_directories(p.parent_path());
    fs::path tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out.good()) throw ValidationError("cannot write file: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out.good()) throw ValidationError("write failed: " + tmp.string());
    }
    fs::rename(tmp, p);
}

void append_line(const fs::path& p, std::string_view line) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::app);
    if (!out.good()) throw ValidationError("cannot append to file: " + p.string());
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.put('\n');
    out.flush();
    if (!out.good()) throw ValidationError("append failed: " + p.string());
}

std::vector<Json> read_ndjson(const fs::path& p) {
    std::vector<Json> rows;
    auto content = read_file_if_exists(p);
    if (!content) return rows;
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < content->size()) {
        auto end = content->find('\n', start);
        if (end == std::string::npos) end = content->size();
        ++line_no;
        std::string_view line(content->data() + start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        try {
            rows.push_back(Json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw IntegrityError(p.string() + ":" + std::to_string(line_no) +
                                 ": bad ndjson line: " + e.what());
        }
    }
    return rows;
}

void write_ndjson_atomic(const fs::path& p, const std::vector<Json>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += r.dump();
        out += '\n';
    }
    write_file_atomic(p, out);
}

Json read_json(const fs::path& p) {
    auto content = read_file(p);
    try {
        return Json::parse(content);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(p.string() + ": bad json: " + e.what());
    }
}

void write_json_atomic(const fs::path& p, const Json& v) {
    write_file_atomic(p, v.dump(2) + "\n");
}

FileLock::FileLock(const fs::path& p, bool try_only) {
    fs::create_directories(p.parent_path());
    fd_ = ::open(p.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) throw ValidationError("cannot open lock file: " + p.string());
    int flags = LOCK_EX | (try_only ? LOCK_NB : 0);
    if (::flock(fd_, flags) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw ValidationError("store is locked by another process: " + p.string());
    }
}

FileLock::~FileLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

}  // namespace gera::store
