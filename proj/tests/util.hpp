#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#if defined(__unix__) || defined(__APPLE__)
#include <sys/wait.h>
#include <unistd.h>
#endif

namespace testutil {

namespace fs = std::filesystem;

// Unique scratch directory, removed on destruction.
struct TempDir {
    fs::path path;

    explicit TempDir(const std::string& prefix) {
        static std::atomic<int> counter{0};
        path = fs::temp_directory_path() /
               (prefix + "-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter.fetch_add(1)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline void write_file(const fs::path& p, const std::string& content) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline std::string read_text(const fs::path& p) { return read_file(p); }

struct CmdResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

// Runs a shell command, capturing stdout/stderr and the exit status.
inline CmdResult run_cmd(const std::string& cmd) {
    TempDir dir("afromnist-cmd");
    const fs::path out = dir.path / "out.txt";
    const fs::path err = dir.path / "err.txt";
    const std::string full = cmd + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(full.c_str());
    CmdResult res;
#if defined(__unix__) || defined(__APPLE__)
    if (WIFEXITED(status)) res.exit_code = WEXITSTATUS(status);
#else
    res.exit_code = status;
#endif
    res.out = read_text(out);
    res.err = read_text(err);
    return res;
}

// First value of "key=value" in line-oriented text, or empty string.
inline std::string kv_lookup(const std::string& text, const std::string& key) {
    std::size_t pos = 0;
    const std::string needle = key + "=";
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        const std::string line = text.substr(pos, eol - pos);
        if (line.rfind(needle, 0) == 0) return line.substr(needle.size());
        pos = eol + 1;
    }
    return {};
}

}  // namespace testutil
