/**
 * Server-sent-events reader over fetch streaming.
 *
 * Built on ReadableStream rather than EventSource so the same code runs in
 * the browser and under node-based tests, and so the Authorization header
 * can be sent (EventSource cannot set headers). Reconnects with a fixed
 * short delay; the gateway replays pending alerts in the `snapshot` event
 * that opens every connection, so a drop loses nothing.
 */

export interface SseEvent {
  event: string;
  data: unknown;
}

export interface StreamHandle {
  close(): void;
}

export interface StreamCallbacks {
  onEvent(event: SseEvent): void;
  onStatus?(connected: boolean): void;
  onDenied?(status: number): void;
}

/** Incremental parser; feed it chunks, it emits complete events. */
export class SseParser {
  private buffer = "";
  private eventName = "message";
  private dataLines: string[] = [];

  feed(chunk: string): SseEvent[] {
    this.buffer += chunk;
    const events: SseEvent[] = [];
    let index: number;
    while ((index = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, index).replace(/\r$/, "");
      this.buffer = this.buffer.slice(index + 1);
      if (line === "") {
        const event = this.flush();
        if (event) events.push(event);
      } else if (line.startsWith(":")) {
        continue;                      // keep-alive comment
      } else if (line.startsWith("event:")) {
        this.eventName = line.slice(6).trim();
      } else if (line.startsWith("data:")) {
        this.dataLines.push(line.slice(5).replace(/^ /, ""));
      }
    }
    return events;
  }

  private flush(): SseEvent | null {
    if (this.dataLines.length === 0) {
      this.eventName = "message";
      return null;
    }
    const raw = this.dataLines.join("\n");
    this.dataLines = [];
    const name = this.eventName;
    this.eventName = "message";
    let data: unknown = raw;
    try {
      data = JSON.parse(raw);
    } catch {
      // non-JSON data stays a string
    }
    return { event: name, data };
  }
}

export function openStream(
  baseUrl: string,
  token: string,
  callbacks: StreamCallbacks,
  reconnectDelayMs = 1000,
): StreamHandle {
  let closed = false;
  let controller: AbortController | null = null;

  async function run(): Promise<void> {
    while (!closed) {
      controller = new AbortController();
      try {
        const response = await fetch(`${baseUrl}/events`, {
          headers: { Authorization: `Bearer ${token}` },
          signal: controller.signal,
        });
        if (response.status >= 400) {
          callbacks.onDenied?.(response.status);
          return;                      // denial is final, no retry loop
        }
        callbacks.onStatus?.(true);
        const reader = response.body!.getReader();
        const decoder = new TextDecoder();
        const parser = new SseParser();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const event of parser.feed(decoder.decode(value, { stream: true }))) {
            callbacks.onEvent(event);
          }
        }
      } catch {
        // fall through to reconnect
      }
      callbacks.onStatus?.(false);
      if (!closed) {
        await new Promise((resolve) => setTimeout(resolve, reconnectDelayMs));
      }
    }
  }

  void run();
  return {
    close() {
      closed = true;
      controller?.abort();
    },
  };
}
