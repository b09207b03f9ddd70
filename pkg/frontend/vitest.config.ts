import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["test/**/*.test.ts"],
    // The integration file builds a trained fixture and spawns the scoring
    // service before its first test; allow generous startup time.
    testTimeout: 120_000,
    hookTimeout: 300_000,
  },
});
