#include <filesystem>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>

#include "cli/cli.hpp"
#include "cli/commands.hpp"

namespace understory::cli {
namespace {

int code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::Io:
    case ErrorKind::Format:
    case ErrorKind::Version:
    case ErrorKind::Checksum:
    case ErrorKind::CountMismatch:
    case ErrorKind::ImageShape:
      return kInputFormat;
    case ErrorKind::InvalidInput:
    case ErrorKind::Invariant:
      return kInvariant;
    case ErrorKind::Numeric:
      return kNumeric;
  }
  return kInvariant;
}

std::string quoted(std::string s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c == '\n' ? ' ' : c);
  }
  return out;
}

int report(std::ostream& err, std::string_view cls, int code, const std::string& message) {
  err << "error class=" << cls << " code=" << code << " message=\"" << quoted(message) << "\"\n";
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"understory: synthetic-aperture forest volume reconstruction"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string manifest_path;
  std::vector<std::string> overrides;
  bool paper_scale = false;
  int workers = 0;
  std::string out_dir;
  app.add_option("-m,--manifest", manifest_path, "run manifest (key = value lines)");
  app.add_option("-s,--set", overrides, "override a manifest key, key=value (repeatable)");
  app.add_flag("--paper-scale", paper_scale, "start from the full-scale configuration instead of desk defaults");
  app.add_option("-w,--workers", workers, "worker threads (overrides the manifest)");
  app.add_option("-o,--out-dir", out_dir, "directory for relative output paths and the resolved manifest");

  std::string chosen;
  for (const auto& [name, info] : commands()) {
    app.add_subcommand(name, info.help)->callback([&chosen, name = name] { chosen = name; });
  }

  std::vector<std::string> argv_store;
  argv_store.push_back("understory");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    return report(err, "usage", kUsage, e.what());
  }

  try {
    Settings s = Settings::defaults(paper_scale);
    if (!manifest_path.empty()) {
      Manifest m;
      try {
        m = read_manifest(manifest_path);
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      s.apply(m);
    }
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      s.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (workers > 0) s.set("workers", std::to_string(workers));
    if (!out_dir.empty()) s.set("out_dir", out_dir);
    s.pipeline();  // surface malformed values before any work

    std::filesystem::create_directories(s.str("out_dir"));
    const std::string resolved = (std::filesystem::path(s.str("out_dir")) / (chosen + ".manifest")).string();
    {
      std::ofstream mf(resolved, std::ios::trunc);
      if (!mf) return report(err, "io", kInputFormat, "cannot write resolved manifest '" + resolved + "'");
      mf << "# resolved manifest for '" << chosen << "'\n";
      write_manifest(mf, s.resolved());
    }
    out << "command=" << chosen << " manifest=" << resolved << '\n';
    commands().at(chosen).run(s, out);
    out << "status=ok command=" << chosen << '\n';
    return kOk;
  } catch (const UsageError& e) {
    return report(err, "usage", kUsage, e.what());
  } catch (const Error& e) {
    return report(err, to_string(e.kind()), code_for(e.kind()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report(err, "io", kInputFormat, e.what());
  } catch (const std::bad_alloc&) {
    return report(err, "numeric", kNumeric, "out of memory");
  }
}

}  // namespace understory::cli
