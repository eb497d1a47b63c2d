// Two-pane single-page app: fuzzified report on the left, grounded chat on
// the right. Pure client of the HTTP API; no scoring logic lives here.

import { ApiError, Client } from "./api.js";
import { ChatView } from "./chat.js";
import { renderEmptyState, renderReport } from "./report.js";
import { showToast } from "./toast.js";

const client = new Client("");

export async function loadRecord(recordId: string): Promise<void> {
  const reportPane = document.getElementById("report-pane")!;
  const chatPane = document.getElementById("chat-pane")!;
  try {
    const report = await client.interpret(recordId);
    renderReport(reportPane, report);
    new ChatView(chatPane, client, recordId);
  } catch (error) {
    if (error instanceof ApiError && error.status === 404) {
      renderEmptyState(reportPane, "Record not found — upload a record to begin.");
    } else if (error instanceof SyntaxError) {
      showToast("The server returned a malformed report.");
    } else {
      showToast(`Could not load the report: ${(error as Error).message}`);
    }
  }
}

function wireControls(): void {
  const form = document.getElementById("record-form") as HTMLFormElement | null;
  const uploadForm = document.getElementById("upload-form") as HTMLFormElement | null;
  form?.addEventListener("submit", (event) => {
    event.preventDefault();
    const input = document.getElementById("record-id") as HTMLInputElement;
    if (input.value.trim()) void loadRecord(input.value.trim());
  });
  uploadForm?.addEventListener("submit", async (event) => {
    event.preventDefault();
    const headerFile = (document.getElementById("header-file") as HTMLInputElement).files?.[0];
    const signalFile = (document.getElementById("signal-file") as HTMLInputElement).files?.[0];
    if (!headerFile || !signalFile) {
      showToast("Choose both a header file and a signal file.");
      return;
    }
    try {
      const recordId = await client.uploadRecord(
        headerFile, headerFile.name, signalFile, signalFile.name,
      );
      showToast(`Uploaded ${recordId}`);
      void loadRecord(recordId);
    } catch (error) {
      showToast(`Upload failed: ${(error as Error).message}`);
    }
  });
}

if (typeof document !== "undefined" && document.getElementById("report-pane")) {
  wireControls();
}
