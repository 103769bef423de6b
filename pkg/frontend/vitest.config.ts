import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // integration tests spawn the Python fixture server once per file
    testTimeout: 30000,
    hookTimeout: 60000,
  },
});
