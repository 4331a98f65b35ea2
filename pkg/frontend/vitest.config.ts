import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    testTimeout: 30_000,
    hookTimeout: 40_000,
    // the e2e spec drives one shared service; keep files sequential
    fileParallelism: false,
  },
});
