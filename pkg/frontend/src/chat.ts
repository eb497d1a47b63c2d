// Chat pane: optimistic user bubbles, assistant replies with citation
// chips, a snippet panel for cited documents, retry for failed sends, and
// transparent session recovery when the server forgets a session.

import { ApiError, Client, ChatReply } from "./api.js";

export class ChatView {
  readonly messages: HTMLElement;
  readonly input: HTMLInputElement;
  readonly sendButton: HTMLButtonElement;
  sessionId: string | null = null;
  private inFlight = false;

  constructor(
    private container: HTMLElement,
    private client: Client,
    private recordId: string,
  ) {
    this.messages = document.createElement("div");
    this.messages.className = "messages";
    const form = document.createElement("form");
    form.className = "chat-input";
    this.input = document.createElement("input");
    this.input.type = "text";
    this.input.placeholder = "Ask about this record…";
    this.sendButton = document.createElement("button");
    this.sendButton.type = "submit";
    this.sendButton.textContent = "Send";
    form.append(this.input, this.sendButton);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const text = this.input.value.trim();
      if (text) {
        this.input.value = "";
        void this.send(text);
      }
    });
    container.replaceChildren(this.messages, form);
  }

  async send(text: string): Promise<void> {
    if (this.inFlight) return; // one request per session at a time
    this.inFlight = true;
    this.sendButton.disabled = true;
    const bubble = this.appendUserBubble(text);
    const scrollBefore = this.messages.scrollTop;
    try {
      const reply = await this.requestReply(text);
      bubble.classList.remove("pending");
      this.sessionId = reply.session_id;
      this.appendAssistantBubble(reply);
    } catch (error) {
      bubble.classList.remove("pending");
      bubble.classList.add("unsent");
      this.attachRetry(bubble, text);
    } finally {
      this.messages.scrollTop = scrollBefore; // keep the reading position
      this.inFlight = false;
      this.sendButton.disabled = false;
    }
  }

  private async requestReply(text: string): Promise<ChatReply> {
    try {
      return await this.client.chat(text, {
        sessionId: this.sessionId ?? undefined,
        recordId: this.recordId,
      });
    } catch (error) {
      // a forgotten session is recoverable: start a new one, retry once
      if (error instanceof ApiError && error.status === 404 && this.sessionId) {
        this.sessionId = null;
        return await this.client.chat(text, { recordId: this.recordId });
      }
      throw error;
    }
  }

  private appendUserBubble(text: string): HTMLElement {
    const bubble = document.createElement("div");
    bubble.className = "message user pending";
    const body = document.createElement("p");
    body.textContent = text;
    bubble.appendChild(body);
    this.messages.appendChild(bubble);
    return bubble;
  }

  private appendAssistantBubble(reply: ChatReply): void {
    const bubble = document.createElement("div");
    bubble.className = reply.degraded ? "message assistant degraded" : "message assistant";
    const body = document.createElement("p");
    body.textContent = reply.response;
    bubble.appendChild(body);
    // the chips row always renders, even with no citations, so grounding
    // (or its absence) is visible on every assistant message
    const chips = document.createElement("div");
    chips.className = "citations";
    for (const docId of reply.citations) {
      const chip = document.createElement("button");
      chip.type = "button";
      chip.className = "citation-chip";
      chip.textContent = docId;
      chip.addEventListener("click", () => openSnippetPanel(docId, reply.response));
      chips.appendChild(chip);
    }
    if (reply.citations.length === 0) {
      const none = document.createElement("span");
      none.className = "no-citations";
      none.textContent = reply.degraded ? "degraded · no citations" : "no citations";
      chips.appendChild(none);
    }
    if (reply.degraded && reply.citations.length > 0) {
      const marker = document.createElement("span");
      marker.className = "degraded-flag";
      marker.textContent = "degraded";
      chips.appendChild(marker);
    }
    bubble.appendChild(chips);
    this.messages.appendChild(bubble);
  }

  private attachRetry(bubble: HTMLElement, text: string): void {
    const retry = document.createElement("button");
    retry.type = "button";
    retry.className = "retry";
    retry.textContent = "Retry";
    retry.addEventListener("click", () => {
      bubble.remove();
      void this.send(text);
    });
    bubble.appendChild(retry);
  }
}

export function openSnippetPanel(docId: string, messageText: string): void {
  let panel = document.getElementById("snippet-panel");
  if (!panel) {
    panel = document.createElement("aside");
    panel.id = "snippet-panel";
    document.body.appendChild(panel);
  }
  panel.replaceChildren();
  panel.removeAttribute("hidden");
  const title = document.createElement("h3");
  title.textContent = docId;
  const snippet = document.createElement("blockquote");
  // the server quotes its sources inline; surface the matching line if any
  const quoted = messageText
    .split("\n")
    .find((line) => line.includes(docId) && line.includes('"'));
  snippet.textContent = quoted ?? `Referenced document: ${docId}`;
  const close = document.createElement("button");
  close.type = "button";
  close.textContent = "Close";
  close.addEventListener("click", () => panel?.setAttribute("hidden", ""));
  panel.append(title, snippet, close);
}
