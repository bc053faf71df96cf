// End-to-end smoke test of the installed CLI: generate a dataset, run the
// deterministic pipeline branches, and benchmark, checking exit codes and
// emitted files.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void expect(bool ok, const std::string& what) {
    if (!ok) {
        ++failures;
        std::cerr << "FAIL: " << what << "\n";
    }
}

int run(const std::string& args) {
    const std::string cmd = std::string(MICROCHAR_CLI_PATH) + " " + args;
    return std::system(cmd.c_str());
}

} // namespace

int main() {
    const fs::path work = fs::temp_directory_path() / "microchar_cli_smoke";
    fs::remove_all(work);
    fs::create_directories(work);
    const std::string ds = (work / "ds").string();

    expect(run("--help > " + (work / "help.txt").string() + " 2>&1") == 0, "help exits 0");

    expect(run("generate --kind particles --n 6 --split 4,1,1 --seed 3 --size 64 --out " + ds) == 0,
           "generate exits 0");
    expect(fs::exists(ds + "/manifest.jsonl"), "manifest written");
    int images = 0;
    for (const auto& entry : fs::directory_iterator(ds + "/images")) {
        (void)entry;
        ++images;
    }
    expect(images == 6, "six images generated");

    // Deterministic binary branch with seeded (untrained) checkpoints.
    const std::string out = (work / "out").string();
    expect(run("pipeline --input " + ds + "/images --mode binary --seeded-checkpoints 7 --out " +
               out + " --report " + (work / "report.jsonl").string()) == 0,
           "pipeline exits 0");
    expect(fs::exists(work / "report.jsonl"), "pipeline report written");

    expect(run("bench --n 2 --size 64 --seed 5 --out " + (work / "bench").string()) == 0,
           "bench exits 0");
    expect(fs::exists(work / "bench" / "bench.csv"), "bench csv written");
    expect(fs::exists(work / "bench" / "bench_psilm.json"), "psilm bench json written");

    // Usage errors exit with 1.
    expect(run("generate --kind nonsense --n 2 2> /dev/null") != 0, "bad kind fails");
    expect(run("definitely-not-a-command 2> /dev/null") != 0, "unknown command fails");

    if (failures == 0) {
        std::cout << "cli smoke: all checks passed\n";
        return 0;
    }
    std::cerr << "cli smoke: " << failures << " failures\n";
    return 1;
}
