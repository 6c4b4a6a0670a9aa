import { existsSync } from "node:fs";
import { dirname, resolve } from "node:path";
import { defineConfig } from "vitest/config";

export default defineConfig({
  plugins: [
    {
      // Source files import "./x.js" (what the browser needs after tsc);
      // map those back to the .ts files when running under vitest.
      name: "ts-source-for-js-imports",
      enforce: "pre",
      resolveId(source, importer) {
        if (importer && source.startsWith(".") && source.endsWith(".js")) {
          const candidate = resolve(dirname(importer), source.slice(0, -3) + ".ts");
          if (existsSync(candidate)) return candidate;
        }
        return null;
      },
    },
  ],
  test: {
    environment: "jsdom",
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
