#include <gtest/gtest.h>

#include <filesystem>

#include "cogscreen/io.h"
#include "cogscreen/manifest.h"

namespace cogscreen {
namespace {

namespace fs = std::filesystem;

TEST(Sha256, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Manifest, RoundTripAndStaleInputs) {
  const auto dir = fs::temp_directory_path() / "cogscreen_manifest_test";
  fs::create_directories(dir);
  atomic_write(dir / "in.txt", "hello");
  atomic_write(dir / "cfg.json", "{}");
  atomic_write(dir / "out.txt", "result");
  RunManifest m;
  m.command = "demo";
  m.argv = {"cogscreen", "demo"};
  m.seeds["split"] = 7;
  m.add_input(dir / "in.txt");
  m.add_config("prep", dir / "cfg.json");
  m.add_output(dir / "out.txt");
  m.summary = {{"n", 3}};
  write_manifest(m, dir / "out.txt");
  const auto path = manifest_path_for(dir / "out.txt");
  EXPECT_EQ(path.filename(), "out.txt.manifest.json");
  const auto back = RunManifest::from_json(nlohmann::json::parse(read_file(path)));
  EXPECT_EQ(back.command, "demo");
  EXPECT_EQ(back.seeds.at("split"), 7u);
  // Config files are hashed as inputs too.
  ASSERT_EQ(back.inputs.size(), 2u);
  EXPECT_EQ(back.configs.at("prep"), (dir / "cfg.json").string());
  EXPECT_EQ(back.inputs[0].sha256, sha256_hex("hello"));
  EXPECT_EQ(back.outputs[0].sha256, sha256_hex("result"));
  EXPECT_FALSE(back.finished_at.empty());
  EXPECT_TRUE(back.stale_inputs().empty());
  atomic_write(dir / "in.txt", "changed");
  EXPECT_EQ(back.stale_inputs().size(), 1u);
}

TEST(AtomicWrite, LeavesNoTempFiles) {
  const auto dir = fs::temp_directory_path() / "cogscreen_atomic_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  atomic_write(dir / "a.txt", "one");
  atomic_write(dir / "a.txt", "two");
  EXPECT_EQ(read_file(dir / "a.txt"), "two");
  EXPECT_EQ(std::distance(fs::directory_iterator(dir), fs::directory_iterator()), 1);
}

}  // namespace
}  // namespace cogscreen
