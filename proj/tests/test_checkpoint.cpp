#include "inkauth/checkpoint.hpp"
#include "inkauth/errors.hpp"
#include "inkauth/fileio.hpp"
#include "test_util.hpp"

namespace inkauth {
namespace {

using testing::TempDir;

Checkpoint sample() {
  Checkpoint c;
  c.arrays["b"] = (Eigen::MatrixXd(2, 3) << 1, 2, 3, 4, 5, -6.25).finished();
  c.arrays["a"] = Eigen::MatrixXd::Constant(1, 1, 1e-300);
  c.arrays["empty"] = Eigen::MatrixXd(0, 4);
  c.text["note"] = "line one\nline two";
  c.text["blank"] = "";
  return c;
}

TEST(Checkpoint, RoundTrip) {
  TempDir dir;
  const Checkpoint c = sample();
  save_checkpoint(c, dir.path() / "c.bin");
  const Checkpoint back = load_checkpoint(dir.path() / "c.bin");
  EXPECT_EQ(back.arrays.size(), 3u);
  EXPECT_EQ(back.array("b"), c.array("b"));
  EXPECT_EQ(back.array("a")(0, 0), 1e-300);
  EXPECT_EQ(back.array("empty").rows(), 0);
  EXPECT_EQ(back.array("empty").cols(), 4);
  EXPECT_EQ(back.text_entry("note"), "line one\nline two");
  EXPECT_EQ(back.text_entry("blank"), "");
}

TEST(Checkpoint, EqualContentsGiveEqualBytes) {
  TempDir dir;
  save_checkpoint(sample(), dir.path() / "a.bin");
  save_checkpoint(load_checkpoint(dir.path() / "a.bin"), dir.path() / "b.bin");
  EXPECT_EQ(read_text(dir.path() / "a.bin"), read_text(dir.path() / "b.bin"));
}

TEST(Checkpoint, MissingEntriesThrow) {
  const Checkpoint c = sample();
  EXPECT_THROW(c.array("nope"), ManifestError);
  EXPECT_THROW(c.text_entry("nope"), ManifestError);
  EXPECT_TRUE(c.has_array("a"));
  EXPECT_FALSE(c.has_array("note"));
}

TEST(Checkpoint, CorruptOrTruncatedFilesThrow) {
  TempDir dir;
  save_checkpoint(sample(), dir.path() / "c.bin");
  const std::string bytes = read_text(dir.path() / "c.bin");
  atomic_write(dir.path() / "t.bin", bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(load_checkpoint(dir.path() / "t.bin"), ManifestError);
  atomic_write(dir.path() / "m.bin", "NOTACKPT" + bytes.substr(8));
  EXPECT_THROW(load_checkpoint(dir.path() / "m.bin"), ManifestError);
  std::string newer = bytes;
  newer[8] = 2;  // version field follows the magic
  atomic_write(dir.path() / "v.bin", newer);
  EXPECT_THROW(load_checkpoint(dir.path() / "v.bin"), ManifestError);
  EXPECT_ANY_THROW(load_checkpoint(dir.path() / "absent.bin"));
}

}  // namespace
}  // namespace inkauth
