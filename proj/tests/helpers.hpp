#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

namespace termforge::testing {

inline std::filesystem::path fixtures_dir() { return TERMFORGE_FIXTURES_DIR; }

// Self-cleaning scratch directory for a test case.
class TempDir {
  public:
    TempDir() {
        static std::atomic<uint64_t> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("termforge-test-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    operator std::filesystem::path() const { return path_; }

  private:
    std::filesystem::path path_;
};

}  // namespace termforge::testing
