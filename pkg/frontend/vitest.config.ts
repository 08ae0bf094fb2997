import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    environment: "node",
    // the integration test boots the annotation service and trains a
    // small model before answering, so give it room
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
