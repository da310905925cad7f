/**
 * "Comment Code" context action: preview a generated comment for the current
 * selection, then apply it into the editor buffer on confirmation.
 *
 * The buffer write happens here, against the editor host, never by the
 * daemon touching files; unsaved edits in the buffer are respected.
 */

import { CodeSelection, CommentResult, GatewayClient } from "./api.js";

export interface EditorHost {
  /** Current selection, or null when nothing is selected. */
  getSelection(): CodeSelection | null;
  getBufferText(): string;
  replaceBuffer(text: string): void;
}

export interface CommentPreview {
  status: CommentResult["status"];
  comment: string | null;
  feedback: string | null;
  trace: CommentResult["trace"];
  /** Buffer content with the comment inserted; null unless accepted. */
  annotated: string | null;
  /** needs_manual_review and failed previews cannot be applied as-is. */
  canApply: boolean;
}

/** Insert a comment block immediately above startLine (1-based), re-indented
 * to that line's leading whitespace; every other line stays untouched. */
export function insertComment(buffer: string, comment: string, startLine: number): string {
  const lines = buffer.split("\n");
  if (startLine < 1 || startLine > lines.length) {
    throw new Error(`start line ${startLine} out of range`);
  }
  const target = lines[startLine - 1] ?? "";
  const indent = target.slice(0, target.length - target.trimStart().length);
  const block = comment
    .split("\n")
    .map((line) => (line.trim() ? indent + line : ""));
  return [...lines.slice(0, startLine - 1), ...block, ...lines.slice(startLine - 1)].join("\n");
}

export class CommentCodeAction {
  constructor(
    private readonly client: GatewayClient,
    private readonly host: EditorHost,
  ) {}

  /** Context-menu entries are hidden without a selection. */
  isEnabled(): boolean {
    return this.host.getSelection() !== null;
  }

  async preview(options: { maxIterations?: number } = {}): Promise<CommentPreview> {
    const selection = this.host.getSelection();
    if (selection === null) throw new Error("no selection");
    const result = await this.client.commentAction(selection, options);
    const accepted = result.status === "accepted" && result.comment !== null;
    return {
      status: result.status,
      comment: result.comment,
      feedback: result.feedback,
      trace: result.trace,
      annotated: accepted
        ? insertComment(this.host.getBufferText(), result.comment!, selection.startLine)
        : null,
      canApply: accepted,
    };
  }

  applyToBuffer(preview: CommentPreview): void {
    if (!preview.canApply || preview.annotated === null) {
      throw new Error(`a ${preview.status} preview cannot be applied`);
    }
    this.host.replaceBuffer(preview.annotated);
  }
}
