import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { GatewayClient } from "../src/api.js";
import { CommentCodeAction, EditorHost, insertComment } from "../src/commentAction.js";
import { Daemon, scriptedDriver, startDaemon } from "./harness.js";

const BUFFER = [
  "public class Greeter {",
  "    private String name;",
  "",
  "    public String greet() {",
  '        return "hello " + name;',
  "    }",
  "}",
].join("\n");

const COMMENT = "/**\n * Greets the configured name.\n */";

function host(selected: boolean): EditorHost & { buffer: string } {
  return {
    buffer: BUFFER,
    getSelection() {
      if (!selected) return null;
      return {
        filePath: "/nonexistent/Greeter.java",
        languageId: "java",
        startLine: 4,
        endLine: 6,
        text: BUFFER.split("\n").slice(3, 6).join("\n"),
      };
    },
    getBufferText() {
      return this.buffer;
    },
    replaceBuffer(text: string) {
      this.buffer = text;
    },
  };
}

let daemon: Daemon;
let client: GatewayClient;

beforeAll(async () => {
  daemon = await startDaemon({
    drivers: [
      scriptedDriver("gen", [{ content: COMMENT }]),
      scriptedDriver("ver", [
        { content: "VERDICT: PASS" },
        { content: "VERDICT: FAIL\nmention the name field" },
        { content: "VERDICT: FAIL\nmention the name field" },
        { content: "VERDICT: FAIL\nmention the name field" },
      ]),
    ],
    tasks: [
      { id: "comment", targets: ["gen"] },
      { id: "doc_quality", targets: ["ver"] },
    ],
  });
  client = new GatewayClient({ baseUrl: daemon.baseUrl });
}, 30000);

afterAll(async () => {
  await daemon?.stop();
});

describe("comment code action", () => {
  it("is disabled without a selection", () => {
    const action = new CommentCodeAction(client, host(false));
    expect(action.isEnabled()).toBe(false);
  });

  it("previews an accepted comment and applies it into the buffer", async () => {
    const editor = host(true);
    const action = new CommentCodeAction(client, editor);
    expect(action.isEnabled()).toBe(true);

    const preview = await action.preview();
    expect(preview.status).toBe("accepted");
    expect(preview.canApply).toBe(true);
    expect(preview.trace.length).toBeGreaterThan(0);

    action.applyToBuffer(preview);
    const lines = editor.buffer.split("\n");
    expect(lines.slice(3, 6)).toEqual([
      "    /**",
      "     * Greets the configured name.",
      "     */",
    ]);
    // every original line survives unchanged around the inserted block
    expect([...lines.slice(0, 3), ...lines.slice(6)]).toEqual(BUFFER.split("\n"));
  });

  it("flags needs_manual_review and refuses to apply", async () => {
    const editor = host(true);
    const action = new CommentCodeAction(client, editor);
    const preview = await action.preview({ maxIterations: 3 });
    expect(preview.status).toBe("needs_manual_review");
    expect(preview.feedback).toContain("mention the name field");
    expect(preview.canApply).toBe(false);
    expect(() => action.applyToBuffer(preview)).toThrow(/cannot be applied/);
    expect(editor.buffer).toBe(BUFFER); // untouched
  });
});

describe("insertComment", () => {
  it("matches the target line indentation", () => {
    const out = insertComment("  a\n  b", "// x", 2);
    expect(out).toBe("  a\n  // x\n  b");
  });

  it("rejects an out-of-range line", () => {
    expect(() => insertComment("a", "// x", 5)).toThrow(/out of range/);
  });
});
