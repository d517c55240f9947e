#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace cdaae::cli {

/// Entry point shared by the binary and the tests. `args` excludes the
/// program name. Returns the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

/// Writes MANIFEST: one "<sha256>  <size>  <relative path>" line per file,
/// sorted by path, skipping the manifest and lock files.
void write_manifest(const std::filesystem::path& dir);

/// Exclusive claim on a run directory through an O_EXCL lock file.
class RunLock {
public:
    explicit RunLock(const std::filesystem::path& dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::filesystem::path path_;
};

} // namespace cdaae::cli
